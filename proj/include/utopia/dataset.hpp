#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "utopia/errors.hpp"
#include "utopia/linalg.hpp"
#include "utopia/rng.hpp"
#include "utopia/schema.hpp"

namespace utopia {

/// Row-major mixed-type table. Numeric cells are raw (unstandardized) values,
/// categorical cells are indices into the owning FeatureSpec's token list.
struct Dataset {
    Schema schema;
    Matrix numeric;        // n_rows x d_num
    IndexMatrix categorical; // n_rows x d_cat
    std::vector<int> labels;

    std::size_t n_rows() const { return labels.size(); }
    std::size_t d_num() const { return numeric.cols(); }
    std::size_t d_cat() const { return categorical.cols(); }
};

inline void validate_dataset(const Dataset& d) {
    validate_schema(d.schema);
    const auto num_pos = d.schema.numeric_positions();
    const auto cat_pos = d.schema.categorical_positions();
    if (d.numeric.cols() != num_pos.size() || d.categorical.cols() != cat_pos.size())
        throw ValidationError("dataset: column counts do not match schema");
    const std::size_t n = d.labels.size();
    if (d.numeric.rows() != n || d.categorical.rows() != n)
        throw ValidationError("dataset: row counts disagree");
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t j = 0; j < num_pos.size(); ++j) {
            const auto& f = d.schema.features[num_pos[j]];
            const double v = d.numeric(r, j);
            if (!std::isfinite(v))
                throw ValidationError("dataset: non-finite value at row " +
                                      std::to_string(r + 1) + ", column '" + f.name + "'");
            if (f.bounded() && (v < f.numeric_min || v > f.numeric_max))
                throw ValidationError("dataset: value " + std::to_string(v) +
                                      " out of bounds at row " + std::to_string(r + 1) +
                                      ", column '" + f.name + "'");
        }
        for (std::size_t j = 0; j < cat_pos.size(); ++j) {
            const auto& f = d.schema.features[cat_pos[j]];
            const auto t = d.categorical(r, j);
            if (t < 0 || static_cast<std::size_t>(t) >= f.tokens.size())
                throw ValidationError("dataset: token index out of range at row " +
                                      std::to_string(r + 1) + ", column '" + f.name + "'");
        }
        if (d.labels[r] < 0 || d.labels[r] >= d.schema.num_classes)
            throw ValidationError("dataset: label out of range at row " +
                                  std::to_string(r + 1));
    }
}

namespace detail {

inline std::vector<std::string_view> split_csv_line(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= line.size(); ++i) {
        if (i == line.size() || line[i] == ',') {
            out.push_back(line.substr(start, i - start));
            start = i + 1;
        }
    }
    return out;
}

inline double parse_double(std::string_view s, std::size_t row, const std::string& col) {
    double v = 0.0;
    const char* first = s.data();
    const char* last = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc{} || ptr != last)
        throw ParseError("row " + std::to_string(row) + ", column '" + col +
                         "': cannot parse numeric value '" + std::string(s) + "'");
    return v;
}

// Shortest decimal representation that round-trips exactly.
inline void append_double(std::string& out, double v) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    out.append(buf, ptr);
}

} // namespace detail

/// Reads a CSV whose header is the schema's feature names followed by "label".
/// Numeric bounds left unset in the schema are resolved to the observed
/// column min/max (widened by 0.5 on each side if the column is constant).
inline Dataset load_csv(const std::filesystem::path& path, const Schema& schema_in) {
    validate_schema(schema_in);
    std::ifstream in(path);
    if (!in) throw IoError("cannot open data file: " + path.string());

    Dataset d;
    d.schema = schema_in;
    const auto num_pos = d.schema.numeric_positions();
    const auto cat_pos = d.schema.categorical_positions();

    std::string line;
    if (!std::getline(in, line)) throw ParseError(path.string() + ": empty file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    {
        const auto header = detail::split_csv_line(line);
        if (header.size() != d.schema.features.size() + 1)
            throw ParseError(path.string() + ": header has " +
                             std::to_string(header.size()) + " columns, expected " +
                             std::to_string(d.schema.features.size() + 1));
        for (std::size_t i = 0; i < d.schema.features.size(); ++i)
            if (header[i] != d.schema.features[i].name)
                throw ParseError(path.string() + ": header column " + std::to_string(i + 1) +
                                 " is '" + std::string(header[i]) + "', expected '" +
                                 d.schema.features[i].name + "'");
        if (header.back() != "label")
            throw ParseError(path.string() + ": last header column must be 'label'");
    }

    // token -> index maps per categorical feature
    std::vector<std::unordered_map<std::string_view, std::int32_t>> token_maps(cat_pos.size());
    for (std::size_t j = 0; j < cat_pos.size(); ++j) {
        const auto& f = d.schema.features[cat_pos[j]];
        for (std::size_t t = 0; t < f.tokens.size(); ++t)
            token_maps[j].emplace(f.tokens[t], static_cast<std::int32_t>(t));
    }

    std::vector<double> numeric_flat;
    std::vector<std::int32_t> cat_flat;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        ++row;
        const auto cells = detail::split_csv_line(line);
        if (cells.size() != d.schema.features.size() + 1)
            throw ParseError("row " + std::to_string(row) + ": has " +
                             std::to_string(cells.size()) + " cells, expected " +
                             std::to_string(d.schema.features.size() + 1));
        std::size_t nj = 0, cj = 0;
        for (std::size_t i = 0; i < d.schema.features.size(); ++i) {
            const auto& f = d.schema.features[i];
            if (f.kind == FeatureKind::numeric) {
                const double v = detail::parse_double(cells[i], row, f.name);
                if (!std::isfinite(v))
                    throw ParseError("row " + std::to_string(row) + ", column '" + f.name +
                                     "': non-finite value");
                if (f.bounded() && (v < f.numeric_min || v > f.numeric_max))
                    throw ParseError("row " + std::to_string(row) + ", column '" + f.name +
                                     "': value " + std::string(cells[i]) +
                                     " outside [" + std::to_string(f.numeric_min) + ", " +
                                     std::to_string(f.numeric_max) + "]");
                numeric_flat.push_back(v);
                ++nj;
            } else {
                const auto it = token_maps[cj].find(cells[i]);
                if (it == token_maps[cj].end())
                    throw ParseError("row " + std::to_string(row) + ", column '" + f.name +
                                     "': unknown token '" + std::string(cells[i]) + "'");
                cat_flat.push_back(it->second);
                ++cj;
            }
        }
        int label = 0;
        {
            const auto s = cells.back();
            auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), label);
            if (ec != std::errc{} || ptr != s.data() + s.size())
                throw ParseError("row " + std::to_string(row) +
                                 ": cannot parse label '" + std::string(s) + "'");
        }
        if (label < 0 || label >= d.schema.num_classes)
            throw ParseError("row " + std::to_string(row) + ": label " +
                             std::to_string(label) + " outside [0, " +
                             std::to_string(d.schema.num_classes) + ")");
        d.labels.push_back(label);
    }

    const std::size_t n = d.labels.size();
    d.numeric = Matrix(n, num_pos.size());
    d.numeric.data().assign(numeric_flat.begin(), numeric_flat.end());
    d.categorical = IndexMatrix(n, cat_pos.size());
    d.categorical.data().assign(cat_flat.begin(), cat_flat.end());

    // Resolve unset bounds from the observed data.
    for (std::size_t j = 0; j < num_pos.size(); ++j) {
        auto& f = d.schema.features[num_pos[j]];
        if (f.bounded()) continue;
        double lo = std::numeric_limits<double>::infinity();
        double hi = -std::numeric_limits<double>::infinity();
        for (std::size_t r = 0; r < n; ++r) {
            lo = std::min(lo, d.numeric(r, j));
            hi = std::max(hi, d.numeric(r, j));
        }
        if (n == 0) { lo = 0.0; hi = 1.0; }
        if (!(lo < hi)) { lo -= 0.5; hi += 0.5; }
        if (!std::isfinite(f.numeric_min)) f.numeric_min = lo;
        if (!std::isfinite(f.numeric_max)) f.numeric_max = hi;
        if (!(f.numeric_min < f.numeric_max))
            throw ValidationError("dataset: cannot resolve bounds for column '" + f.name + "'");
    }

    validate_dataset(d);
    return d;
}

inline void write_csv(const Dataset& d, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write data file: " + path.string());
    std::string buf;
    for (const auto& f : d.schema.features) {
        buf += f.name;
        buf += ',';
    }
    buf += "label\n";
    const auto num_pos = d.schema.numeric_positions();
    const auto cat_pos = d.schema.categorical_positions();
    for (std::size_t r = 0; r < d.n_rows(); ++r) {
        std::size_t nj = 0, cj = 0;
        for (const auto& f : d.schema.features) {
            if (f.kind == FeatureKind::numeric) {
                detail::append_double(buf, d.numeric(r, nj++));
            } else {
                buf += f.tokens[static_cast<std::size_t>(d.categorical(r, cj++))];
            }
            buf += ',';
        }
        buf += std::to_string(d.labels[r]);
        buf += '\n';
    }
    out << buf;
    if (!out) throw IoError("failed writing data file: " + path.string());
}

inline Dataset take_rows(const Dataset& d, const std::vector<std::size_t>& rows) {
    Dataset out;
    out.schema = d.schema;
    out.numeric = Matrix(rows.size(), d.d_num());
    out.categorical = IndexMatrix(rows.size(), d.d_cat());
    out.labels.resize(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const std::size_t r = rows[i];
        for (std::size_t j = 0; j < d.d_num(); ++j) out.numeric(i, j) = d.numeric(r, j);
        for (std::size_t j = 0; j < d.d_cat(); ++j) out.categorical(i, j) = d.categorical(r, j);
        out.labels[i] = d.labels[r];
    }
    return out;
}

/// Class-stratified disjoint train/val/test partition, deterministic per seed.
/// Every class must be able to place at least one row in each part.
inline std::array<Dataset, 3> split(const Dataset& d, std::array<double, 3> fractions,
                                    std::uint64_t seed) {
    for (double f : fractions)
        if (!(f > 0.0)) throw ValidationError("split: fractions must be positive");
    const double sum = fractions[0] + fractions[1] + fractions[2];
    if (std::abs(sum - 1.0) > 1e-9)
        throw ValidationError("split: fractions must sum to 1");

    std::vector<std::vector<std::size_t>> by_class(
        static_cast<std::size_t>(d.schema.num_classes));
    for (std::size_t r = 0; r < d.n_rows(); ++r)
        by_class[static_cast<std::size_t>(d.labels[r])].push_back(r);

    Rng rng(seed);
    std::array<std::vector<std::size_t>, 3> parts;
    for (std::size_t c = 0; c < by_class.size(); ++c) {
        auto& rows = by_class[c];
        if (rows.empty()) continue;
        if (rows.size() < 3)
            throw ValidationError("split: class " + std::to_string(c) + " has only " +
                                  std::to_string(rows.size()) +
                                  " rows, cannot stratify into 3 parts");
        rng.shuffle(rows);
        // Largest-remainder apportionment, then guarantee one row per part.
        const auto nc = rows.size();
        std::array<std::size_t, 3> count{};
        std::array<double, 3> rem{};
        std::size_t assigned = 0;
        for (int p = 0; p < 3; ++p) {
            const double exact = fractions[static_cast<std::size_t>(p)] * static_cast<double>(nc);
            count[static_cast<std::size_t>(p)] = static_cast<std::size_t>(exact);
            rem[static_cast<std::size_t>(p)] = exact - std::floor(exact);
            assigned += count[static_cast<std::size_t>(p)];
        }
        while (assigned < nc) {
            int best = 0;
            for (int p = 1; p < 3; ++p)
                if (rem[static_cast<std::size_t>(p)] > rem[static_cast<std::size_t>(best)])
                    best = p;
            ++count[static_cast<std::size_t>(best)];
            rem[static_cast<std::size_t>(best)] = -1.0;
            ++assigned;
        }
        for (int p = 0; p < 3; ++p) {
            if (count[static_cast<std::size_t>(p)] > 0) continue;
            int donor = 0;
            for (int q = 1; q < 3; ++q)
                if (count[static_cast<std::size_t>(q)] > count[static_cast<std::size_t>(donor)])
                    donor = q;
            --count[static_cast<std::size_t>(donor)];
            ++count[static_cast<std::size_t>(p)];
        }
        std::size_t offset = 0;
        for (int p = 0; p < 3; ++p) {
            for (std::size_t i = 0; i < count[static_cast<std::size_t>(p)]; ++i)
                parts[static_cast<std::size_t>(p)].push_back(rows[offset + i]);
            offset += count[static_cast<std::size_t>(p)];
        }
    }
    for (auto& p : parts) std::sort(p.begin(), p.end());
    return {take_rows(d, parts[0]), take_rows(d, parts[1]), take_rows(d, parts[2])};
}

} // namespace utopia
