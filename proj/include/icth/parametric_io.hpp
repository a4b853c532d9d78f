#pragma once

#include <optional>
#include <string>

#include <json.hpp>

#include "icth/parametric.hpp"
#include "icth/util.hpp"

namespace icth::models {

// Fitted-model file: one JSON object,
//   {"family":…, "kernel":…, "mu":…, "kappa":…, "theta":…, "c":…, "N":…, "fit_ll":…}
// with null for fields that do not apply to the family/kernel.
inline std::string model_to_json(const ParametricModel& m, std::optional<double> fit_ll = std::nullopt) {
    std::string out = "{\"family\":\"";
    out += family_name(m.family);
    out += "\",\"kernel\":\"";
    out += m.kernel.kind == KernelKind::Exponential ? "exponential" : "powerlaw";
    out += "\",\"mu\":" + fmt17(m.mu);
    out += ",\"kappa\":" + fmt17(m.kernel.kappa);
    out += ",\"theta\":" + fmt17(m.kernel.theta);
    out += ",\"c\":";
    out += m.kernel.kind == KernelKind::PowerLaw ? fmt17(m.kernel.c) : "null";
    out += ",\"N\":";
    out += m.family == Family::HawkesN ? std::to_string(m.N) : "null";
    out += ",\"fit_ll\":";
    out += fit_ll ? fmt17(*fit_ll) : "null";
    out += "}";
    return out;
}

inline ParametricModel model_from_json(const nlohmann::json& j) {
    ParametricModel m;
    m.family = family_from_name(j.at("family").get<std::string>());
    std::string kk = j.at("kernel").get<std::string>();
    if (kk == "exponential") m.kernel.kind = KernelKind::Exponential;
    else if (kk == "powerlaw") m.kernel.kind = KernelKind::PowerLaw;
    else throw std::invalid_argument("unknown kernel kind: " + kk);
    m.mu = j.at("mu").get<double>();
    m.kernel.kappa = j.at("kappa").get<double>();
    m.kernel.theta = j.at("theta").get<double>();
    if (j.contains("c") && !j["c"].is_null()) m.kernel.c = j["c"].get<double>();
    if (j.contains("N") && !j["N"].is_null()) m.N = j["N"].get<std::int64_t>();
    return m;
}

inline void write_model(const ParametricModel& m, const std::string& path,
                        std::optional<double> fit_ll = std::nullopt) {
    atomic_write_file(path, model_to_json(m, fit_ll) + "\n");
}

inline ParametricModel read_model(const std::string& path) {
    return model_from_json(nlohmann::json::parse(read_file(path)));
}

} // namespace icth::models
