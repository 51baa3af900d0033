#ifndef SRVSIM_IO_HPP
#define SRVSIM_IO_HPP

// Artifact writers. Every file starts with a one-line format header.

#include <cstdio>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "srvsim/attacks.hpp"
#include "srvsim/memhier.hpp"
#include "srvsim/mld.hpp"
#include "srvsim/trace.hpp"

namespace srvsim
{

inline std::string hex(std::uint64_t v)
{
    char buf[24];
    std::snprintf(buf, sizeof buf, "0x%llx", static_cast<unsigned long long>(v));
    return buf;
}

inline nlohmann::ordered_json to_json(const TraceEvent& e)
{
    nlohmann::ordered_json j;
    j["tick"] = e.tick;
    j["kind"] = to_string(e.kind);
    if (e.instr_seq >= 0) j["instr_seq"] = e.instr_seq;
    if (e.lane >= 0) j["lane"] = e.lane;
    j["iteration"] = e.iteration;
    switch (e.kind) {
        case EventKind::Load:
        case EventKind::Store:
        case EventKind::Probe:
            j["pass"] = e.pass;
            j["addr"] = hex(e.addr);
            j["size"] = e.size;
            j["level"] = e.level;
            j["value"] = e.value;
            j["speculative"] = e.speculative;
            break;
        case EventKind::LsqCheck:
            j["pass"] = e.pass;
            j["addr"] = hex(e.addr);
            j["vob"] = hex(e.vob);
            j["hob"] = hex(e.hob);
            break;
        case EventKind::Branch:
            j["predicted"] = e.predicted;
            j["actual"] = e.actual;
            break;
        default:
            j["mask"] = hex(e.mask);
            j["pass"] = e.pass;
            break;
    }
    return j;
}

inline void write_trace(std::ostream& os, const Trace& trace)
{
    os << R"({"format":"trace_v1"})" << '\n';
    for (const auto& e : trace) os << to_json(e).dump() << '\n';
}

inline void write_mld(std::ostream& os, const MldReport& report)
{
    os << R"({"format":"mld_v1"})" << '\n';
    for (const auto& f : report.firings) {
        nlohmann::ordered_json j;
        j["tick"] = f.tick;
        j["name"] = f.mld;
        j["instr_seq"] = f.instr_seq;
        j["lane"] = f.lane;
        j["detail"] = std::string(to_string(f.event)) + " " + hex(f.addr);
        os << j.dump() << '\n';
    }
}

inline std::string fixed(double v, int digits = 4)
{
    std::ostringstream os;
    os << std::fixed << std::setprecision(digits) << v;
    return os.str();
}

inline void write_matrix_csv(std::ostream& os, const std::vector<MatrixCell>& cells)
{
    os << "# srvsim matrix_v1\n";
    os << "scenario,mitigation,trials,accuracy,outcome,architecturally_correct\n";
    for (const auto& c : cells)
        os << c.scenario << ',' << to_string(c.mitigation) << ',' << c.trials << ',' << fixed(c.accuracy) << ','
           << (c.leak ? "leak" : c.no_leak ? "no_leak" : "partial") << ',' << (c.architecturally_correct ? 1 : 0) << '\n';
}

inline void write_latency_csv(std::ostream& os, const LatencyTable& table)
{
    os << "# srvsim latency_v1\n";
    os << "size_bytes,mean_ticks,samples\n";
    for (const auto& r : table) os << r.size << ',' << fixed(r.mean, 2) << ',' << r.samples.size() << '\n';
}

inline void write_leak_report(std::ostream& os, const Scenario& s, const LeakResult& r)
{
    os << "srvsim report_v1\n";
    os << "scenario: " << s.name << " (" << to_string(s.kind) << ")\n";
    os << "strategy: " << to_string(s.core.strategy) << ", width " << s.core.width << ", mitigation "
       << to_string(s.core.mitigation) << "\n";
    os << "timer: granularity " << s.timer.granularity << ", jitter " << fixed(s.timer.jitter_stddev, 2) << "\n";
    unsigned ok = 0;
    for (bool b : r.per_byte_correct) ok += b ? 1 : 0;
    os << "recovered: " << r.recovered << "\n";
    os << "correct: " << ok << "/" << r.per_byte_correct.size() << "\n";
    os << "accuracy: " << fixed(r.accuracy) << "\n";
    os << "ambiguous decodes: " << r.ambiguous << "\n";
    unsigned replays = 0;
    for (auto n : r.replay_counts) replays += n;
    os << "replays in armed runs: " << replays << "\n";
    os << "architectural state matches scalar execution: " << (r.architecturally_correct ? "yes" : "no") << "\n";
}

inline void write_matrix_report(std::ostream& os, const std::vector<MatrixCell>& cells)
{
    os << "srvsim report_v1\n";
    for (const auto& c : cells)
        os << std::left << std::setw(16) << c.scenario << std::setw(26) << to_string(c.mitigation) << fixed(c.accuracy)
           << "  " << (c.leak ? "LEAK" : c.no_leak ? "no leak" : "partial") << "\n";
}

} // namespace srvsim

#endif
