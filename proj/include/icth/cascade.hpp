#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "icth/util.hpp"

namespace icth::data {

// One record of a cascade: either an observed event time, or a censored
// interval (start, duration, count) whose event timestamps are unknown.
struct CascadeRecord {
    enum class Kind { PointEvent, CensoredInterval };

    Kind kind = Kind::PointEvent;
    double time = 0.0;       // event time, or interval start
    double duration = 0.0;   // CensoredInterval only, > 0
    std::int64_t count = 0;  // CensoredInterval only, >= 0

    static CascadeRecord event(double t) {
        if (!std::isfinite(t) || t < 0.0) throw std::invalid_argument("event time must be finite and >= 0");
        CascadeRecord r;
        r.kind = Kind::PointEvent;
        r.time = t;
        return r;
    }

    static CascadeRecord interval(double start, double dur, std::int64_t count) {
        if (!std::isfinite(start) || start < 0.0) throw std::invalid_argument("interval start must be finite and >= 0");
        if (!std::isfinite(dur) || dur <= 0.0) throw std::invalid_argument("interval duration must be > 0");
        if (count < 0) throw std::invalid_argument("interval count must be >= 0");
        CascadeRecord r;
        r.kind = Kind::CensoredInterval;
        r.time = start;
        r.duration = dur;
        r.count = count;
        return r;
    }

    bool is_event() const { return kind == Kind::PointEvent; }
    bool is_interval() const { return kind == Kind::CensoredInterval; }
    double end() const { return is_event() ? time : time + duration; }

    friend bool operator==(const CascadeRecord&, const CascadeRecord&) = default;
};

// Ordered record sequence observed on [0, horizon].
struct Cascade {
    std::string id;
    double horizon = 0.0;
    std::vector<CascadeRecord> records;

    std::size_t n_events() const {
        std::size_t n = 0;
        for (const auto& r : records) n += r.is_event() ? 1 : 0;
        return n;
    }

    // Observed events plus all censored counts.
    std::int64_t implied_count() const {
        std::int64_t n = 0;
        for (const auto& r : records)
            n += r.is_event() ? 1 : r.count;
        return n;
    }

    std::vector<double> event_times() const {
        std::vector<double> t;
        t.reserve(records.size());
        for (const auto& r : records)
            if (r.is_event()) t.push_back(r.time);
        return t;
    }

    bool events_only() const {
        for (const auto& r : records)
            if (r.is_interval()) return false;
        return true;
    }

    friend bool operator==(const Cascade&, const Cascade&) = default;
};

// All cascades tied to one online item or user; the unit that gets embedded.
struct CascadeGroup {
    std::string group_id;
    std::optional<std::string> label;
    std::optional<std::vector<std::string>> tags;
    std::vector<Cascade> cascades;

    friend bool operator==(const CascadeGroup&, const CascadeGroup&) = default;
};

// One observed event of a raw sampled-down stream, carrying the cumulative
// retweeted_count as read from source (may be non-monotone).
struct RawObservedEvent {
    double time = 0.0;
    std::int64_t cumulative_count = 0;
};

struct Violation {
    enum class Kind { BadValue, Unsorted, Overlap, EventInsideInterval, Horizon, UntiledGap };
    Kind kind;
    std::size_t record_index;
    std::string detail;
};

inline const char* violation_name(Violation::Kind k) {
    switch (k) {
        case Violation::Kind::BadValue: return "bad_value";
        case Violation::Kind::Unsorted: return "unsorted";
        case Violation::Kind::Overlap: return "overlap";
        case Violation::Kind::EventInsideInterval: return "event_in_interval";
        case Violation::Kind::Horizon: return "horizon";
        case Violation::Kind::UntiledGap: return "untiled_gap";
    }
    return "?";
}

inline double tiling_eps(double horizon) { return 1e-9 * (1.0 + std::abs(horizon)); }

// Returns every invariant violation; empty iff the cascade is canonical.
// Tiling (gap intervals everywhere, tail reaching the horizon) is required
// only once the cascade contains censored intervals; pure event sequences
// are canonical as-is.
inline std::vector<Violation> validate(const Cascade& c) {
    std::vector<Violation> out;
    const double eps = tiling_eps(c.horizon);
    if (!(c.horizon > 0.0) || !std::isfinite(c.horizon)) {
        out.push_back({Violation::Kind::BadValue, 0, "horizon must be finite and > 0"});
        return out;
    }

    bool any_interval = false;
    for (std::size_t i = 0; i < c.records.size(); ++i) {
        const auto& r = c.records[i];
        if (!std::isfinite(r.time) || r.time < 0.0)
            out.push_back({Violation::Kind::BadValue, i, "time must be finite and >= 0"});
        if (r.is_interval()) {
            any_interval = true;
            if (!std::isfinite(r.duration) || r.duration <= 0.0)
                out.push_back({Violation::Kind::BadValue, i, "duration must be > 0"});
            if (r.count < 0)
                out.push_back({Violation::Kind::BadValue, i, "count must be >= 0"});
        }
        if (r.end() > c.horizon + eps)
            out.push_back({Violation::Kind::Horizon, i, "record ends after horizon"});
    }
    if (!out.empty()) return out;

    // Sorted by anchor time; at equal anchors an event precedes the interval
    // that starts there.
    for (std::size_t i = 1; i < c.records.size(); ++i) {
        const auto& a = c.records[i - 1];
        const auto& b = c.records[i];
        bool ok = a.time < b.time ||
                  (a.time == b.time && !(a.is_interval() && b.is_event()));
        if (!ok) out.push_back({Violation::Kind::Unsorted, i, "records out of order"});
    }

    // Interval spans must be disjoint and must not contain an event time in
    // their open interior.
    double prev_interval_end = -1.0;
    std::size_t prev_interval_idx = 0;
    for (std::size_t i = 0; i < c.records.size(); ++i) {
        const auto& r = c.records[i];
        if (r.is_interval()) {
            if (prev_interval_end > r.time + eps)
                out.push_back({Violation::Kind::Overlap, i, "interval overlaps interval " + std::to_string(prev_interval_idx)});
            if (r.end() > prev_interval_end) {
                prev_interval_end = r.end();
                prev_interval_idx = i;
            }
        } else {
            if (prev_interval_end > r.time + eps)
                out.push_back({Violation::Kind::EventInsideInterval, i, "event inside interval interior"});
        }
    }

    // Fully tiled form for mixed cascades: records chain without gaps from the
    // first anchor to the horizon.
    if (any_interval && out.empty() && !c.records.empty()) {
        double cursor = c.records.front().time;
        for (std::size_t i = 0; i < c.records.size(); ++i) {
            const auto& r = c.records[i];
            if (std::abs(r.time - cursor) > eps) {
                out.push_back({Violation::Kind::UntiledGap, i, "gap before record not covered by an interval"});
                cursor = r.time;
            }
            if (r.is_interval()) cursor = r.end();
        }
        if (out.empty() && std::abs(cursor - c.horizon) > eps)
            out.push_back({Violation::Kind::UntiledGap, c.records.empty() ? 0 : c.records.size() - 1,
                           "tail not covered up to horizon"});
    }
    return out;
}

struct ReconstructWarning {
    std::size_t gap_index;   // index of the observation opening the gap
    std::string message;
};

struct ReconstructResult {
    Cascade cascade;
    std::vector<ReconstructWarning> warnings;
};

// Rebuilds a fully tiled cascade from observed events carrying cumulative
// retweet counts. The running cumulative is clamped so each observation
// raises it by at least 1 (the observed event itself); the missing count in
// each gap is the clamped increment minus 1, which reduces to
// max(0, rtc_{i+1} - rtc_i - 1) on consistent data. rtc_0 - 1 events are
// attributed to [0, t_0). Counts below the running cumulative (deletions)
// clamp with a warning. Zero-length gaps push their missing count into the
// next positive-duration gap.
inline ReconstructResult reconstruct_missing_counts(const std::vector<RawObservedEvent>& raw,
                                                    double horizon,
                                                    std::string cascade_id = {}) {
    if (raw.empty()) throw std::invalid_argument("reconstruct: empty input");
    if (!(horizon > 0.0) || !std::isfinite(horizon)) throw std::invalid_argument("reconstruct: horizon must be > 0");
    for (std::size_t i = 0; i < raw.size(); ++i) {
        if (!std::isfinite(raw[i].time) || raw[i].time < 0.0)
            throw std::invalid_argument("reconstruct: times must be finite and >= 0");
        if (raw[i].time > horizon)
            throw std::invalid_argument("reconstruct: observation after horizon");
        if (i > 0 && raw[i].time < raw[i - 1].time)
            throw std::invalid_argument("reconstruct: times must be sorted");
    }

    ReconstructResult res;
    res.cascade.id = std::move(cascade_id);
    res.cascade.horizon = horizon;
    auto& recs = res.cascade.records;

    std::int64_t cum = std::max<std::int64_t>(raw.front().cumulative_count, 1);
    std::int64_t pending = cum - 1;  // events before the first observation
    if (pending > 0 && raw.front().time > 0.0) {
        recs.push_back(CascadeRecord::interval(0.0, raw.front().time, pending));
        pending = 0;
    }

    for (std::size_t i = 0; i < raw.size(); ++i) {
        recs.push_back(CascadeRecord::event(raw[i].time));
        double gap_end = (i + 1 < raw.size()) ? raw[i + 1].time : horizon;
        std::int64_t missing = 0;
        if (i + 1 < raw.size()) {
            if (raw[i + 1].cumulative_count < cum + 1)
                res.warnings.push_back({i, "non-monotone cumulative count at gap " + std::to_string(i) +
                                               "; clamped to 0"});
            std::int64_t next_cum = std::max(raw[i + 1].cumulative_count, cum + 1);
            missing = next_cum - cum - 1;
            cum = next_cum;
        }
        missing += pending;
        pending = 0;
        if (gap_end > raw[i].time) {
            recs.push_back(CascadeRecord::interval(raw[i].time, gap_end - raw[i].time, missing));
        } else {
            pending = missing;  // zero-length gap; carry forward
        }
    }
    if (pending > 0)
        res.warnings.push_back({raw.size() - 1,
                                "no room after last observation for " + std::to_string(pending) +
                                    " carried event(s); dropped"});
    return res;
}

// Removes each point event independently with probability p_missing, folding
// its unit count into the interval tiling its former position (adjacent
// intervals merge). Returns the input unchanged when nothing was removed;
// otherwise the output is fully tiled over [first anchor, horizon].
inline Cascade downsample(const Cascade& cascade, double p_missing, std::uint64_t seed) {
    if (!(p_missing >= 0.0 && p_missing <= 1.0))
        throw std::invalid_argument("downsample: p_missing must be in [0, 1]");
    if (cascade.records.empty()) return cascade;

    std::vector<double> event_times;
    for (const auto& r : cascade.records)
        if (r.is_event()) event_times.push_back(r.time);

    std::mt19937_64 rng = make_rng(seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::vector<bool> removed(event_times.size(), false);
    bool any_removed = false;
    for (std::size_t e = 0; e < event_times.size(); ++e) {
        removed[e] = unif(rng) < p_missing;
        any_removed = any_removed || removed[e];
    }
    if (!any_removed) return cascade;

    const double start = cascade.records.front().time;
    if (!(cascade.horizon > start)) return cascade;  // no span to absorb counts into

    // Kept events partition [start, horizon] into segments. Every censored
    // count and every removed event lands in exactly one segment (records of
    // a valid cascade never straddle an event time).
    std::vector<double> bounds;
    bounds.push_back(start);
    for (std::size_t e = 0; e < event_times.size(); ++e)
        if (!removed[e]) bounds.push_back(event_times[e]);
    bounds.push_back(cascade.horizon);

    const std::size_t n_seg = bounds.size() - 1;
    std::vector<std::int64_t> seg_count(n_seg, 0);
    auto segment_of = [&](double t) {
        // first segment [bounds[s], bounds[s+1]) containing t; horizon goes last
        std::size_t s = 0;
        while (s + 1 < n_seg && t >= bounds[s + 1]) ++s;
        return s;
    };
    for (const auto& r : cascade.records)
        if (r.is_interval() && r.count > 0) seg_count[segment_of(r.time)] += r.count;
    for (std::size_t e = 0; e < event_times.size(); ++e)
        if (removed[e]) seg_count[segment_of(event_times[e])] += 1;

    // Only the last segment can be zero-length and still receive counts
    // (kept event exactly at the horizon); fold them into the nearest
    // positive-length segment so nothing is lost.
    for (std::size_t s = n_seg; s-- > 1;) {
        if (seg_count[s] > 0 && !(bounds[s + 1] > bounds[s])) {
            seg_count[s - 1] += seg_count[s];
            seg_count[s] = 0;
        }
    }

    Cascade out;
    out.id = cascade.id;
    out.horizon = cascade.horizon;
    for (std::size_t s = 0; s < n_seg; ++s) {
        if (s > 0) out.records.push_back(CascadeRecord::event(bounds[s]));
        if (bounds[s + 1] > bounds[s])
            out.records.push_back(CascadeRecord::interval(bounds[s], bounds[s + 1] - bounds[s], seg_count[s]));
    }
    return out;
}

// Keeps records that end at or before t_cut; the horizon shrinks to t_cut.
inline Cascade truncate(const Cascade& c, double t_cut) {
    if (!(t_cut > 0.0)) throw std::invalid_argument("truncate: cut must be > 0");
    Cascade out;
    out.id = c.id;
    out.horizon = t_cut;
    const double eps = tiling_eps(t_cut);
    for (const auto& r : c.records)
        if (r.end() <= t_cut + eps) out.records.push_back(r);
    return out;
}

// Keeps the first max_records records, shrinking the horizon to the end of
// the last kept record so mixed cascades stay fully tiled.
inline Cascade clip_records(const Cascade& c, std::size_t max_records) {
    if (c.records.size() <= max_records) return c;
    Cascade out;
    out.id = c.id;
    out.records.assign(c.records.begin(), c.records.begin() + static_cast<std::ptrdiff_t>(max_records));
    out.horizon = out.records.empty() ? c.horizon : out.records.back().end();
    if (!(out.horizon > 0.0)) out.horizon = c.horizon;
    return out;
}

} // namespace icth::data
