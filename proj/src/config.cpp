#include "fwicert/config.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

#include "fwicert/error.hpp"

namespace fwicert {

namespace {

struct KeyInfo {
    const char* name;
    CliConfig::Type type;
    const char* default_value;
};

// The full fail-closed registry. Every module default lives here.
const std::vector<KeyInfo>& registry() {
    static const std::vector<KeyInfo> keys = {
        {"run.seed", CliConfig::Type::unsigned_integer, "42"},
        {"run.workers", CliConfig::Type::unsigned_integer, "0"},

        {"data.n", CliConfig::Type::unsigned_integer, "100"},
        {"data.out", CliConfig::Type::string, ""},
        {"data.grid", CliConfig::Type::unsigned_integer, "32"},
        {"data.dx", CliConfig::Type::real, "10"},
        {"data.dz", CliConfig::Type::real, "10"},
        {"data.faults", CliConfig::Type::integer, "1"},
        {"data.freq", CliConfig::Type::real, "15"},
        {"data.sources", CliConfig::Type::unsigned_integer, "3"},
        {"data.nt_record", CliConfig::Type::unsigned_integer, "0"},
        {"data.amplitude", CliConfig::Type::real, "1"},
        {"data.velocity_min", CliConfig::Type::real, "1500"},
        {"data.velocity_max", CliConfig::Type::real, "4500"},

        {"model.base_channels", CliConfig::Type::unsigned_integer, "4"},

        {"train.dataset", CliConfig::Type::string, ""},
        {"train.out_model", CliConfig::Type::string, ""},
        {"train.loss", CliConfig::Type::string, "mae"},
        {"train.opt", CliConfig::Type::string, "adamw"},
        {"train.epochs", CliConfig::Type::unsigned_integer, "25"},
        {"train.batch", CliConfig::Type::unsigned_integer, "16"},
        {"train.lr", CliConfig::Type::real, "0"},
        {"train.weight_decay", CliConfig::Type::real, "1e-4"},
        {"train.train_size", CliConfig::Type::unsigned_integer, "0"},
        {"train.holdout", CliConfig::Type::unsigned_integer, "0"},

        {"certify.model", CliConfig::Type::string, ""},
        {"certify.dataset", CliConfig::Type::string, ""},
        {"certify.eta", CliConfig::Type::real, "0.1"},
        {"certify.draws", CliConfig::Type::unsigned_integer, "1000"},
        {"certify.loss", CliConfig::Type::string, "mae"},
        {"certify.test_size", CliConfig::Type::unsigned_integer, "0"},

        {"perturb.model_mae", CliConfig::Type::string, ""},
        {"perturb.model_mse", CliConfig::Type::string, ""},
        {"perturb.dataset", CliConfig::Type::string, ""},
        {"perturb.out", CliConfig::Type::string, ""},
        {"perturb.snr", CliConfig::Type::string, "inf,30,20,10,0"},
        {"perturb.draws", CliConfig::Type::unsigned_integer, "1"},
        {"perturb.test_size", CliConfig::Type::unsigned_integer, "200"},

        {"generalize.dataset", CliConfig::Type::string, ""},
        {"generalize.out", CliConfig::Type::string, ""},
        {"generalize.sizes", CliConfig::Type::string, "200,400,800,1600"},
        {"generalize.archs", CliConfig::Type::string, "4"},
        {"generalize.test_size", CliConfig::Type::unsigned_integer, "200"},
        {"generalize.seeds", CliConfig::Type::unsigned_integer, "1"},

        {"drift.models", CliConfig::Type::string, ""},
        {"drift.out", CliConfig::Type::string, ""},
        {"drift.sets_dir", CliConfig::Type::string, ""},
        {"drift.faults", CliConfig::Type::string, "1,2,3,4"},
        {"drift.freqs", CliConfig::Type::string, "15,20,25"},
        {"drift.test_size", CliConfig::Type::unsigned_integer, "200"},

        {"report.in", CliConfig::Type::string, ""},
        {"report.out", CliConfig::Type::string, ""},
        {"report.format", CliConfig::Type::string, "csv"},
    };
    return keys;
}

const KeyInfo* find_key(const std::string& name) {
    for (const auto& k : registry())
        if (name == k.name) return &k;
    return nullptr;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
}

void check_type(const KeyInfo& info, const std::string& value) {
    const char* c = value.c_str();
    char* end = nullptr;
    switch (info.type) {
    case CliConfig::Type::string:
        return;
    case CliConfig::Type::integer:
        std::strtoll(c, &end, 10);
        if (end == c || *end != '\0')
            throw ConfigError("key '" + std::string(info.name) + "' expects an integer, got '" +
                              value + "'");
        return;
    case CliConfig::Type::unsigned_integer: {
        if (!value.empty() && value[0] == '-')
            throw ConfigError("key '" + std::string(info.name) +
                              "' expects a non-negative integer, got '" + value + "'");
        std::strtoull(c, &end, 10);
        if (end == c || *end != '\0')
            throw ConfigError("key '" + std::string(info.name) +
                              "' expects a non-negative integer, got '" + value + "'");
        return;
    }
    case CliConfig::Type::real:
        std::strtod(c, &end);
        if (end == c || *end != '\0')
            throw ConfigError("key '" + std::string(info.name) + "' expects a number, got '" +
                              value + "'");
        return;
    }
}

} // namespace

CliConfig CliConfig::defaults() {
    CliConfig cfg;
    for (const auto& k : registry()) cfg.values_[k.name] = k.default_value;
    return cfg;
}

CliConfig CliConfig::from_text(const std::string& text) {
    CliConfig cfg = defaults();
    std::istringstream is(text);
    std::string line, section;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        line = trim(line);
        if (line.empty() || line[0] == '#' || line[0] == ';') continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw ConfigError("config line " + std::to_string(lineno) +
                                  ": malformed section header");
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        const std::string full = section.empty() ? key : section + "." + key;
        cfg.set_checked(full, value);
    }
    return cfg;
}

CliConfig CliConfig::from_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ConfigError("cannot open config file: " + path);
    std::stringstream ss;
    ss << is.rdbuf();
    return from_text(ss.str());
}

void CliConfig::set_checked(const std::string& key, const std::string& value) {
    const KeyInfo* info = find_key(key);
    if (!info) throw ConfigError("unknown config key '" + key + "'");
    check_type(*info, value);
    values_[key] = value;
}

void CliConfig::override_key(const std::string& key, const std::string& value) {
    set_checked(key, value);
}

bool CliConfig::has(const std::string& key) const { return values_.count(key) > 0; }

std::string CliConfig::get_string(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
    return it->second;
}

std::int64_t CliConfig::get_int(const std::string& key) const {
    const std::string v = get_string(key);
    char* end = nullptr;
    const std::int64_t r = std::strtoll(v.c_str(), &end, 10);
    if (end == v.c_str() || *end != '\0')
        throw ConfigError("key '" + key + "' expects an integer, got '" + v + "'");
    return r;
}

std::uint64_t CliConfig::get_u64(const std::string& key) const {
    const std::string v = get_string(key);
    char* end = nullptr;
    const std::uint64_t r = std::strtoull(v.c_str(), &end, 10);
    if (end == v.c_str() || *end != '\0' || v[0] == '-')
        throw ConfigError("key '" + key + "' expects a non-negative integer, got '" + v + "'");
    return r;
}

std::size_t CliConfig::get_size(const std::string& key) const {
    return static_cast<std::size_t>(get_u64(key));
}

double CliConfig::get_double(const std::string& key) const {
    const std::string v = get_string(key);
    char* end = nullptr;
    const double r = std::strtod(v.c_str(), &end);
    if (end == v.c_str() || *end != '\0')
        throw ConfigError("key '" + key + "' expects a number, got '" + v + "'");
    return r;
}

std::vector<std::string> CliConfig::get_list(const std::string& key) const {
    std::vector<std::string> out;
    std::string cur;
    for (char c : get_string(key)) {
        if (c == ',') {
            out.push_back(trim(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    cur = trim(cur);
    if (!cur.empty() || !out.empty()) out.push_back(cur);
    out.erase(std::remove(out.begin(), out.end(), std::string()), out.end());
    return out;
}

std::vector<double> CliConfig::get_double_list(const std::string& key) const {
    std::vector<double> out;
    for (const auto& s : get_list(key)) {
        char* end = nullptr;
        const double v = std::strtod(s.c_str(), &end);
        if (end == s.c_str() || *end != '\0')
            throw ConfigError("key '" + key + "' expects numbers, got '" + s + "'");
        out.push_back(v);
    }
    return out;
}

std::vector<std::size_t> CliConfig::get_size_list(const std::string& key) const {
    std::vector<std::size_t> out;
    for (const auto& s : get_list(key)) {
        char* end = nullptr;
        const std::uint64_t v = std::strtoull(s.c_str(), &end, 10);
        if (end == s.c_str() || *end != '\0' || s[0] == '-')
            throw ConfigError("key '" + key + "' expects non-negative integers, got '" + s + "'");
        out.push_back(static_cast<std::size_t>(v));
    }
    return out;
}

std::string CliConfig::echo() const {
    std::ostringstream os;
    for (const auto& k : registry()) os << k.name << " = " << values_.at(k.name) << "\n";
    return os.str();
}

std::string CliConfig::hash() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : echo()) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::vector<std::string> CliConfig::provenance() const {
    std::vector<std::string> lines;
    lines.push_back(std::string("tool = fwicert ") + kToolVersion);
    lines.push_back("config_hash = " + hash());
    lines.push_back("master_seed = " + get_string("run.seed"));
    std::istringstream is(echo());
    std::string line;
    while (std::getline(is, line)) lines.push_back("cfg " + line);
    return lines;
}

std::size_t CliConfig::effective_workers() const {
    if (const char* env = std::getenv("FWI_CERTIFY_WORKERS")) {
        char* end = nullptr;
        const unsigned long v = std::strtoul(env, &end, 10);
        if (end != env && *end == '\0' && v > 0) return static_cast<std::size_t>(v);
    }
    const std::size_t cfg = get_size("run.workers");
    if (cfg > 0) return cfg;
    const unsigned hc = std::thread::hardware_concurrency();
    return hc == 0 ? 1 : hc;
}

std::map<std::string, std::string> parse_key_values(const std::string& text) {
    std::map<std::string, std::string> out;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        line = trim(line);
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        out[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    return out;
}

} // namespace fwicert
