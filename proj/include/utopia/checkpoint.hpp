#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "utopia/errors.hpp"
#include "utopia/model.hpp"
#include "utopia/schema.hpp"

namespace utopia {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

// Versioned binary model dump; doubles are stored as raw IEEE-754 bytes so
// the round-trip is bit-exact.
namespace detail {

constexpr char kModelMagic[8] = {'U', 'T', 'O', 'P', 'I', 'A', 'M', '1'};

inline void put_u64(std::ostream& out, std::uint64_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}
inline void put_f64(std::ostream& out, double v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}
inline void put_f64s(std::ostream& out, const std::vector<double>& v) {
    put_u64(out, v.size());
    out.write(reinterpret_cast<const char*>(v.data()),
              static_cast<std::streamsize>(v.size() * sizeof(double)));
}
inline void put_matrix(std::ostream& out, const Matrix& m) {
    put_u64(out, m.rows());
    put_u64(out, m.cols());
    out.write(reinterpret_cast<const char*>(m.data().data()),
              static_cast<std::streamsize>(m.data().size() * sizeof(double)));
}

inline std::uint64_t get_u64(std::istream& in) {
    std::uint64_t v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!in) throw ParseError("model checkpoint: truncated file");
    return v;
}
inline std::vector<double> get_f64s(std::istream& in) {
    const auto nIt = get_u64(in);
    std::vector<double> v(nIt);
    in.read(reinterpret_cast<char*>(v.data()),
            static_cast<std::streamsize>(nIt * sizeof(double)));
    if (!in) throw ParseError("model checkpoint: truncated file");
    return v;
}
inline Matrix get_matrix(std::istream& in) {
    const auto r = get_u64(in);
    const auto c = get_u64(in);
    Matrix m(r, c);
    in.read(reinterpret_cast<char*>(m.data().data()),
            static_cast<std::streamsize>(r * c * sizeof(double)));
    if (!in) throw ParseError("model checkpoint: truncated file");
    return m;
}

} // namespace detail

inline void save_model(const SurrogateModel& m, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write model checkpoint: " + path.string());
    out.write(detail::kModelMagic, sizeof detail::kModelMagic);

    const std::string schema = schema_to_json(m.schema).dump();
    detail::put_u64(out, schema.size());
    out.write(schema.data(), static_cast<std::streamsize>(schema.size()));

    detail::put_u64(out, static_cast<std::uint64_t>(m.embed_width));
    detail::put_u64(out, static_cast<std::uint64_t>(m.activation));
    detail::put_f64s(out, m.scaler.mean);
    detail::put_f64s(out, m.scaler.std);

    detail::put_u64(out, m.weights.size());
    for (std::size_t l = 0; l < m.weights.size(); ++l) {
        detail::put_matrix(out, m.weights[l]);
        detail::put_f64s(out, m.biases[l]);
    }
    detail::put_u64(out, m.embeddings.size());
    for (const auto& e : m.embeddings) detail::put_matrix(out, e);
    if (!out) throw IoError("failed writing model checkpoint: " + path.string());
}

inline SurrogateModel load_model(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open model checkpoint: " + path.string());
    char magic[8];
    in.read(magic, sizeof magic);
    if (!in || std::memcmp(magic, detail::kModelMagic, sizeof magic) != 0)
        throw ParseError("model checkpoint: bad magic/version in " + path.string());

    SurrogateModel m;
    const auto schema_len = detail::get_u64(in);
    std::string schema(schema_len, '\0');
    in.read(schema.data(), static_cast<std::streamsize>(schema_len));
    if (!in) throw ParseError("model checkpoint: truncated schema");
    m.schema = schema_from_json(nlohmann::json::parse(schema));

    m.embed_width = static_cast<int>(detail::get_u64(in));
    m.activation = static_cast<Activation>(detail::get_u64(in));
    m.scaler.mean = detail::get_f64s(in);
    m.scaler.std = detail::get_f64s(in);

    const auto layers = detail::get_u64(in);
    for (std::uint64_t l = 0; l < layers; ++l) {
        m.weights.push_back(detail::get_matrix(in));
        m.biases.push_back(detail::get_f64s(in));
    }
    const auto tables = detail::get_u64(in);
    for (std::uint64_t e = 0; e < tables; ++e) m.embeddings.push_back(detail::get_matrix(in));
    return m;
}

} // namespace utopia
