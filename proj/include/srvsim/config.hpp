#ifndef SRVSIM_CONFIG_HPP
#define SRVSIM_CONFIG_HPP

// Scenario files are `key = value` sections:
//
//   [scenario]  name, kind, gadget (path relative to this file),
//               training_iterations, secret, seed
//   [core]      width, strategy, mitigation, replay_policy, replay_limit,
//               mdp_threshold, branch_counter_bits
//   [cache]     line, l1_size, l1_assoc, l1_latency, llc_size, llc_assoc,
//               llc_latency, memory_latency, replacement, seed
//   [timer]     granularity, jitter, seed
//   [channel]   array, stride, threshold
//
// Sizes accept K/M/G suffixes. Values may be double-quoted.

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <cctype>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>

#include "srvsim/attacks.hpp"
#include "srvsim/dsl.hpp"

namespace srvsim
{

namespace config_detail
{
inline std::string trim(std::string s)
{
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.pop_back();
    std::size_t i = 0;
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    s.erase(0, i);
    if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
    return s;
}
} // namespace config_detail

inline std::uint64_t parse_size(const std::string& text)
{
    const std::string s = config_detail::trim(text);
    if (s.empty()) throw ConfigError("empty size");
    std::size_t pos = 0;
    unsigned long long v = 0;
    try {
        v = std::stoull(s, &pos, 0);
    }
    catch (const std::exception&) {
        throw ConfigError("invalid size '" + s + "'");
    }
    std::string suffix = s.substr(pos);
    if (!suffix.empty() && (suffix.back() == 'B' || suffix.back() == 'b')) suffix.pop_back();
    if (suffix.empty()) return v;
    if (suffix == "K" || suffix == "k") return v << 10;
    if (suffix == "M" || suffix == "m") return v << 20;
    if (suffix == "G" || suffix == "g") return v << 30;
    throw ConfigError("invalid size suffix in '" + s + "'");
}

inline std::string format_size(std::uint64_t b)
{
    if (b >= (1ull << 30) && b % (1ull << 30) == 0) return std::to_string(b >> 30) + "G";
    if (b >= (1ull << 20) && b % (1ull << 20) == 0) return std::to_string(b >> 20) + "M";
    if (b >= (1ull << 10) && b % (1ull << 10) == 0) return std::to_string(b >> 10) + "K";
    return std::to_string(b);
}

/// Typed view over a parsed section tree. Every lookup failure is a ConfigError.
class ConfigReader
{
public:
    explicit ConfigReader(boost::property_tree::ptree tree)
        : tree_(std::move(tree))
    {
    }

    std::optional<std::string> str(const std::string& key) const
    {
        auto v = tree_.get_optional<std::string>(boost::property_tree::ptree::path_type(key, '.'));
        if (!v) return std::nullopt;
        return config_detail::trim(*v);
    }

    std::string str_or(const std::string& key, const std::string& dflt) const { return str(key).value_or(dflt); }

    template<class T>
    std::optional<T> num(const std::string& key) const
    {
        const auto s = str(key);
        if (!s) return std::nullopt;
        std::istringstream is(*s);
        T v{};
        is >> v;
        if (!is || !is.eof()) throw ConfigError("'" + key + "' expects a number, got '" + *s + "'");
        return v;
    }

    std::optional<std::uint64_t> size(const std::string& key) const
    {
        const auto s = str(key);
        if (!s) return std::nullopt;
        return parse_size(*s);
    }

private:
    boost::property_tree::ptree tree_;
};

inline ConfigReader read_config_text(const std::string& text)
{
    boost::property_tree::ptree tree;
    std::istringstream is(text);
    try {
        boost::property_tree::ini_parser::read_ini(is, tree);
    }
    catch (const boost::property_tree::ini_parser_error& e) {
        throw ConfigError("config parse error at line " + std::to_string(e.line()) + ": " + e.message());
    }
    return ConfigReader(std::move(tree));
}

inline void apply_core(const ConfigReader& c, CoreConfig& core)
{
    if (auto v = c.num<unsigned>("core.width")) core.width = *v;
    if (auto v = c.str("core.strategy")) core.strategy = parse_strategy(*v);
    if (auto v = c.str("core.mitigation")) core.mitigation = parse_mitigation(*v);
    if (auto v = c.str("core.replay_policy")) core.replay_policy = parse_replay_policy(*v);
    if (auto v = c.num<unsigned>("core.replay_limit")) core.replay_limit = *v;
    if (auto v = c.num<unsigned>("core.mdp_threshold")) core.mdp_threshold = *v;
    if (auto v = c.num<unsigned>("core.branch_counter_bits")) core.branch_counter_bits = *v;
}

inline void apply_cache(const ConfigReader& c, CacheConfig& cache)
{
    auto& l1 = cache.levels.at(0);
    auto& llc = cache.levels.at(1);
    if (auto v = c.num<unsigned>("cache.line")) l1.line = llc.line = *v;
    if (auto v = c.size("cache.l1_size")) l1.size = *v;
    if (auto v = c.num<unsigned>("cache.l1_assoc")) l1.assoc = *v;
    if (auto v = c.num<Tick>("cache.l1_latency")) l1.hit_latency = *v;
    if (auto v = c.size("cache.llc_size")) llc.size = *v;
    if (auto v = c.num<unsigned>("cache.llc_assoc")) llc.assoc = *v;
    if (auto v = c.num<Tick>("cache.llc_latency")) llc.hit_latency = *v;
    if (auto v = c.num<Tick>("cache.memory_latency")) cache.memory_latency = *v;
    if (auto v = c.num<std::uint64_t>("cache.seed")) cache.seed = *v;
    if (auto v = c.str("cache.replacement")) {
        Replacement r;
        if (*v == "lru") r = Replacement::LRU;
        else if (*v == "random") r = Replacement::Random;
        else throw ConfigError("unknown replacement '" + *v + "' (valid: lru, random)");
        l1.replacement = llc.replacement = r;
    }
}

inline void apply_timer(const ConfigReader& c, TimerModel& t)
{
    if (auto v = c.num<Tick>("timer.granularity")) t.granularity = *v;
    if (auto v = c.num<double>("timer.jitter")) t.jitter_stddev = *v;
    if (auto v = c.num<std::uint64_t>("timer.seed")) t.seed = *v;
}

/// Parses a scenario file. `gadget` paths resolve against the file's directory.
inline Scenario load_scenario(const std::string& path)
{
    namespace fs = std::filesystem;
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open scenario file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    const ConfigReader c = read_config_text(ss.str());
    Scenario s;
    s.name = c.str_or("scenario.name", fs::path(path).stem().string());
    s.kind = parse_scenario_kind(c.str_or("scenario.kind", "srv_leak"));
    const auto gadget = c.str("scenario.gadget");
    if (!gadget) throw ConfigError("scenario '" + s.name + "' names no gadget file");
    const fs::path gpath = fs::path(path).parent_path() / *gadget;
    s.program = load_gadget_file(gpath.string());
    if (auto v = c.num<unsigned>("scenario.training_iterations")) s.training_iterations = *v;
    if (auto v = c.str("scenario.secret")) s.secret = *v;
    if (auto v = c.num<std::uint64_t>("scenario.seed")) s.seed = *v;
    apply_core(c, s.core);
    apply_cache(c, s.cache);
    apply_timer(c, s.timer);
    if (auto v = c.str("channel.array")) s.channel.array = *v;
    if (auto v = c.num<Addr>("channel.stride")) s.channel.stride = *v;
    if (auto v = c.num<Tick>("channel.threshold")) s.channel.threshold = *v;
    try {
        s.validate();
    }
    catch (const ValidationError& e) {
        throw ConfigError("scenario '" + s.name + "': " + e.what());
    }
    return s;
}

} // namespace srvsim

#endif
