#ifndef FWICERT_CONFIG_HPP
#define FWICERT_CONFIG_HPP

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace fwicert {

inline constexpr const char* kToolVersion = "0.1.0";

/// Flat key/value configuration with a fail-closed registry: every key is
/// declared with a type and default, unknown keys are rejected, and the
/// effective config can be echoed canonically into provenance headers.
class CliConfig {
public:
    enum class Type { string, integer, unsigned_integer, real };

    static CliConfig defaults();

    /// Parses INI-style text ([section] / key = value / # comments) over the
    /// defaults. Throws ConfigError naming the offending key.
    static CliConfig from_text(const std::string& text);
    static CliConfig from_file(const std::string& path);

    /// Applies flag-style overrides ("section.key" = value), highest
    /// precedence.
    void override_key(const std::string& key, const std::string& value);

    bool has(const std::string& key) const;
    std::string get_string(const std::string& key) const;
    std::int64_t get_int(const std::string& key) const;
    std::uint64_t get_u64(const std::string& key) const;
    std::size_t get_size(const std::string& key) const;
    double get_double(const std::string& key) const;
    std::vector<std::string> get_list(const std::string& key) const;  // comma-separated
    std::vector<double> get_double_list(const std::string& key) const;
    std::vector<std::size_t> get_size_list(const std::string& key) const;

    /// Canonical echo: one "section.key = value" line per registered key,
    /// registry order.
    std::string echo() const;
    /// FNV-1a 64 over the echo, hex-encoded.
    std::string hash() const;
    /// Standard provenance lines carried by every artifact.
    std::vector<std::string> provenance() const;

    /// Worker count: run.workers, overridden by FWI_CERTIFY_WORKERS, with 0
    /// meaning hardware concurrency.
    std::size_t effective_workers() const;

private:
    void set_checked(const std::string& key, const std::string& value);
    std::map<std::string, std::string> values_;
};

/// Simple "key = value" text block reader (model sidecars and similar).
std::map<std::string, std::string> parse_key_values(const std::string& text);

} // namespace fwicert

#endif
