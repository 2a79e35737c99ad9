#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace cfaa::config {

enum class ValueType { Int, Real, Text };

struct KeySpec {
    const char* name;
    ValueType type;
    const char* default_value;
};

/// Known configuration keys in emission order.
const std::vector<KeySpec>& schema();

/// Flat key=value configuration. Unknown keys are rejected by name; every
/// key always has a value (defaults fill the gaps) and the resolved text
/// reproduces the run.
class RunConfig {
public:
    static RunConfig defaults();

    /// Set one key; throws for unknown keys or values of the wrong type.
    void set(const std::string& key, const std::string& value);

    /// Parse `key = value` lines (# comments, blank lines allowed).
    void apply_text(const std::string& text, const std::string& origin);
    void load_file(const std::string& path);

    bool is_known(const std::string& key) const;
    const std::set<std::string>& explicit_keys() const { return explicit_; }

    long get_int(const std::string& key) const;
    double get_real(const std::string& key) const;
    const std::string& get_text(const std::string& key) const;
    /// Stored string for any known key, regardless of type.
    const std::string& raw_value(const std::string& key) const;
    std::uint64_t seed() const { return static_cast<std::uint64_t>(get_int("seed")); }

    /// All keys in schema order, one `key = value` line each.
    std::string resolved_text() const;

    /// Cross-key checks (arm name, nonlinearity, positive sizes).
    void validate() const;

private:
    std::map<std::string, std::string> values_;
    std::set<std::string> explicit_;
};

} // namespace cfaa::config
