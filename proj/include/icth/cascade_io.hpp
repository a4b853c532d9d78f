#pragma once

#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "icth/cascade.hpp"
#include "icth/util.hpp"

namespace icth::data {

// Cascade-group file: one JSON object per line,
//   {"group_id": str, "label": str|null, "tags": [str]|null,
//    "cascades": [{"id": str, "horizon": float,
//                  "records": [{"t": float} | {"o": float, "d": float, "c": int}]}]}
// Floats carry 17 significant digits so write/read round-trips bit-exactly.

inline void append_cascade_json(std::string& out, const Cascade& c) {
    out += "{\"id\":\"";
    out += json_escape(c.id);
    out += "\",\"horizon\":";
    out += fmt17(c.horizon);
    out += ",\"records\":[";
    for (std::size_t i = 0; i < c.records.size(); ++i) {
        if (i) out += ',';
        const auto& r = c.records[i];
        if (r.is_event()) {
            out += "{\"t\":";
            out += fmt17(r.time);
            out += '}';
        } else {
            out += "{\"o\":";
            out += fmt17(r.time);
            out += ",\"d\":";
            out += fmt17(r.duration);
            out += ",\"c\":";
            out += std::to_string(r.count);
            out += '}';
        }
    }
    out += "]}";
}

inline std::string group_to_json_line(const CascadeGroup& g) {
    std::string out = "{\"group_id\":\"" + json_escape(g.group_id) + "\",\"label\":";
    out += g.label ? ("\"" + json_escape(*g.label) + "\"") : "null";
    out += ",\"tags\":";
    if (g.tags) {
        out += '[';
        for (std::size_t i = 0; i < g.tags->size(); ++i) {
            if (i) out += ',';
            out += "\"" + json_escape((*g.tags)[i]) + "\"";
        }
        out += ']';
    } else {
        out += "null";
    }
    out += ",\"cascades\":[";
    for (std::size_t i = 0; i < g.cascades.size(); ++i) {
        if (i) out += ',';
        append_cascade_json(out, g.cascades[i]);
    }
    out += "]}";
    return out;
}

inline void write_groups(const std::vector<CascadeGroup>& groups, const std::string& path) {
    std::string content;
    for (const auto& g : groups) {
        content += group_to_json_line(g);
        content += '\n';
    }
    atomic_write_file(path, content);
}

inline Cascade cascade_from_json(const nlohmann::json& j, const std::string& where) {
    Cascade c;
    if (!j.contains("id") || !j["id"].is_string()) throw std::runtime_error(where + ": cascade missing \"id\"");
    if (!j.contains("horizon") || !j["horizon"].is_number()) throw std::runtime_error(where + ": cascade missing \"horizon\"");
    if (!j.contains("records") || !j["records"].is_array()) throw std::runtime_error(where + ": cascade missing \"records\"");
    c.id = j["id"].get<std::string>();
    c.horizon = j["horizon"].get<double>();
    for (const auto& rj : j["records"]) {
        if (rj.contains("t")) {
            c.records.push_back(CascadeRecord::event(rj["t"].get<double>()));
        } else if (rj.contains("o") && rj.contains("d") && rj.contains("c")) {
            c.records.push_back(CascadeRecord::interval(rj["o"].get<double>(), rj["d"].get<double>(),
                                                        rj["c"].get<std::int64_t>()));
        } else {
            throw std::runtime_error(where + ": record is neither {\"t\"} nor {\"o\",\"d\",\"c\"}");
        }
    }
    return c;
}

inline std::vector<CascadeGroup> read_groups(const std::string& path) {
    std::istringstream in(read_file(path));
    std::vector<CascadeGroup> groups;
    std::set<std::string> seen_ids;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const std::string where = path + ":" + std::to_string(line_no);
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw std::runtime_error(where + ": malformed JSON line: " + e.what());
        }
        CascadeGroup g;
        if (!j.contains("group_id") || !j["group_id"].is_string())
            throw std::runtime_error(where + ": missing \"group_id\"");
        g.group_id = j["group_id"].get<std::string>();
        if (!seen_ids.insert(g.group_id).second)
            throw std::runtime_error(where + ": duplicate group_id \"" + g.group_id + "\"");
        if (j.contains("label") && !j["label"].is_null()) g.label = j["label"].get<std::string>();
        if (j.contains("tags") && !j["tags"].is_null()) g.tags = j["tags"].get<std::vector<std::string>>();
        if (!j.contains("cascades") || !j["cascades"].is_array())
            throw std::runtime_error(where + ": missing \"cascades\"");
        for (const auto& cj : j["cascades"]) g.cascades.push_back(cascade_from_json(cj, where));
        groups.push_back(std::move(g));
    }
    return groups;
}

// Raw-event file: one JSON object per line,
//   {"cascade_id": str, "events": [{"t": float, "rtc": int}], "horizon": float}

struct RawCascade {
    std::string cascade_id;
    std::vector<RawObservedEvent> events;
    double horizon = 0.0;
};

inline void write_raw_events(const std::vector<RawCascade>& raws, const std::string& path) {
    std::string content;
    for (const auto& rc : raws) {
        content += "{\"cascade_id\":\"" + json_escape(rc.cascade_id) + "\",\"events\":[";
        for (std::size_t i = 0; i < rc.events.size(); ++i) {
            if (i) content += ',';
            content += "{\"t\":" + fmt17(rc.events[i].time) +
                       ",\"rtc\":" + std::to_string(rc.events[i].cumulative_count) + "}";
        }
        content += "],\"horizon\":" + fmt17(rc.horizon) + "}\n";
    }
    atomic_write_file(path, content);
}

inline std::vector<RawCascade> read_raw_events(const std::string& path) {
    std::istringstream in(read_file(path));
    std::vector<RawCascade> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const std::string where = path + ":" + std::to_string(line_no);
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw std::runtime_error(where + ": malformed JSON line: " + e.what());
        }
        RawCascade rc;
        if (!j.contains("cascade_id") || !j["cascade_id"].is_string())
            throw std::runtime_error(where + ": missing \"cascade_id\"");
        rc.cascade_id = j["cascade_id"].get<std::string>();
        if (!j.contains("events") || !j["events"].is_array())
            throw std::runtime_error(where + ": missing \"events\"");
        for (const auto& ej : j["events"]) {
            if (!ej.contains("t") || !ej.contains("rtc"))
                throw std::runtime_error(where + ": event needs \"t\" and \"rtc\"");
            rc.events.push_back({ej["t"].get<double>(), ej["rtc"].get<std::int64_t>()});
        }
        if (!j.contains("horizon") || !j["horizon"].is_number())
            throw std::runtime_error(where + ": missing \"horizon\"");
        rc.horizon = j["horizon"].get<double>();
        out.push_back(std::move(rc));
    }
    return out;
}

} // namespace icth::data
