#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "utopia/errors.hpp"

namespace utopia {

enum class FeatureKind { numeric, categorical };

/// One column of a mixed-type table. Numeric columns carry domain bounds
/// (raw units); categorical columns carry their token vocabulary.
/// Bounds left at +-infinity mean "unset" and are resolved from data at load.
struct FeatureSpec {
    std::string name;
    FeatureKind kind = FeatureKind::numeric;
    double numeric_min = -std::numeric_limits<double>::infinity();
    double numeric_max = std::numeric_limits<double>::infinity();
    std::vector<std::string> tokens;

    bool bounded() const {
        return std::isfinite(numeric_min) && std::isfinite(numeric_max);
    }
};

struct Schema {
    std::vector<FeatureSpec> features;
    int num_classes = 2;

    std::size_t d_num() const {
        std::size_t n = 0;
        for (const auto& f : features)
            if (f.kind == FeatureKind::numeric) ++n;
        return n;
    }
    std::size_t d_cat() const { return features.size() - d_num(); }

    // Positions of numeric / categorical features within `features`.
    std::vector<std::size_t> numeric_positions() const {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < features.size(); ++i)
            if (features[i].kind == FeatureKind::numeric) out.push_back(i);
        return out;
    }
    std::vector<std::size_t> categorical_positions() const {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < features.size(); ++i)
            if (features[i].kind == FeatureKind::categorical) out.push_back(i);
        return out;
    }

    const FeatureSpec& numeric_feature(std::size_t j) const {
        return features[numeric_positions()[j]];
    }
    const FeatureSpec& categorical_feature(std::size_t j) const {
        return features[categorical_positions()[j]];
    }

    friend bool operator==(const Schema& a, const Schema& b) {
        if (a.num_classes != b.num_classes || a.features.size() != b.features.size())
            return false;
        for (std::size_t i = 0; i < a.features.size(); ++i) {
            const auto& fa = a.features[i];
            const auto& fb = b.features[i];
            if (fa.name != fb.name || fa.kind != fb.kind || fa.tokens != fb.tokens)
                return false;
            if (fa.kind == FeatureKind::numeric &&
                (fa.numeric_min != fb.numeric_min || fa.numeric_max != fb.numeric_max))
                return false;
        }
        return true;
    }
};

inline void validate_schema(const Schema& s) {
    if (s.num_classes < 2)
        throw ValidationError("schema: num_classes must be >= 2");
    if (s.features.empty())
        throw ValidationError("schema: no features");
    std::unordered_set<std::string> names;
    bool any_numeric = false;
    for (const auto& f : s.features) {
        if (f.name.empty())
            throw ValidationError("schema: empty feature name");
        if (f.name.find(',') != std::string::npos)
            throw ValidationError("schema: feature name '" + f.name + "' contains a comma");
        if (!names.insert(f.name).second)
            throw ValidationError("schema: duplicate feature name '" + f.name + "'");
        if (f.name == "label")
            throw ValidationError("schema: feature name 'label' is reserved");
        if (f.kind == FeatureKind::numeric) {
            any_numeric = true;
            if (f.bounded() && !(f.numeric_min < f.numeric_max))
                throw ValidationError("schema: feature '" + f.name +
                                      "' needs numeric_min < numeric_max");
        } else {
            if (f.tokens.empty())
                throw ValidationError("schema: categorical feature '" + f.name +
                                      "' has no tokens");
            std::unordered_set<std::string> tok;
            for (const auto& t : f.tokens) {
                if (t.find(',') != std::string::npos)
                    throw ValidationError("schema: token '" + t + "' of feature '" +
                                          f.name + "' contains a comma");
                if (!tok.insert(t).second)
                    throw ValidationError("schema: duplicate token '" + t +
                                          "' in feature '" + f.name + "'");
            }
        }
    }
    if (!any_numeric)
        throw ValidationError("schema: at least one numeric feature is required");
}

// ---- schema sidecar file (JSON) -------------------------------------------
//
// {
//   "num_classes": 2,
//   "features": [
//     {"name": "x0", "kind": "numeric", "min": -9.0, "max": 9.0},
//     {"name": "c0", "kind": "categorical", "tokens": ["a", "b"]}
//   ]
// }
// "min"/"max" may be omitted; they are then resolved from the data file.

inline Schema schema_from_json(const nlohmann::json& j) {
    Schema s;
    if (!j.contains("num_classes") || !j["num_classes"].is_number_integer())
        throw ParseError("schema file: missing integer field 'num_classes'");
    s.num_classes = j["num_classes"].get<int>();
    if (!j.contains("features") || !j["features"].is_array())
        throw ParseError("schema file: missing array field 'features'");
    for (const auto& jf : j["features"]) {
        FeatureSpec f;
        if (!jf.contains("name")) throw ParseError("schema file: feature without 'name'");
        f.name = jf["name"].get<std::string>();
        const std::string kind = jf.value("kind", std::string{});
        if (kind == "numeric") {
            f.kind = FeatureKind::numeric;
            if (jf.contains("min")) f.numeric_min = jf["min"].get<double>();
            if (jf.contains("max")) f.numeric_max = jf["max"].get<double>();
        } else if (kind == "categorical") {
            f.kind = FeatureKind::categorical;
            if (!jf.contains("tokens") || !jf["tokens"].is_array())
                throw ParseError("schema file: categorical feature '" + f.name +
                                 "' without 'tokens'");
            for (const auto& t : jf["tokens"]) f.tokens.push_back(t.get<std::string>());
        } else {
            throw ParseError("schema file: feature '" + f.name +
                             "' has unknown kind '" + kind + "'");
        }
        s.features.push_back(std::move(f));
    }
    validate_schema(s);
    return s;
}

inline nlohmann::json schema_to_json(const Schema& s) {
    nlohmann::json j;
    j["num_classes"] = s.num_classes;
    j["features"] = nlohmann::json::array();
    for (const auto& f : s.features) {
        nlohmann::json jf;
        jf["name"] = f.name;
        if (f.kind == FeatureKind::numeric) {
            jf["kind"] = "numeric";
            if (std::isfinite(f.numeric_min)) jf["min"] = f.numeric_min;
            if (std::isfinite(f.numeric_max)) jf["max"] = f.numeric_max;
        } else {
            jf["kind"] = "categorical";
            jf["tokens"] = f.tokens;
        }
        j["features"].push_back(std::move(jf));
    }
    return j;
}

inline Schema load_schema(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open schema file: " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("schema file " + path.string() + ": " + e.what());
    }
    return schema_from_json(j);
}

inline void save_schema(const Schema& s, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write schema file: " + path.string());
    out << schema_to_json(s).dump(2) << '\n';
}

} // namespace utopia
