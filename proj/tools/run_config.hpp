#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace paglab::cli {

struct OptionSpec {
    std::string key;
    std::string default_value; // empty means unset
    std::string help;
};

/// Resolved key=value configuration for one command. Precedence:
/// built-in defaults < preset < config file < command-line overrides.
/// Unknown keys are rejected at every layer.
class RunConfig {
public:
    explicit RunConfig(std::vector<OptionSpec> specs);

    void apply_preset(const std::string& name, const std::map<std::string, std::string>& values);
    void load_file(const std::filesystem::path& path);
    void set_override(const std::string& key, const std::string& value);

    bool has(const std::string& key) const;
    std::string get_string(const std::string& key) const;
    std::uint64_t get_u64(const std::string& key) const;
    double get_double(const std::string& key) const;
    bool get_bool(const std::string& key) const;
    std::optional<double> get_optional_double(const std::string& key) const;
    std::optional<std::string> get_optional_string(const std::string& key) const;

    /// Sorted key=value text of the fully resolved configuration.
    std::string resolved_text() const;
    void write_resolved(const std::filesystem::path& path) const;

    const std::vector<OptionSpec>& specs() const { return specs_; }

private:
    void check_known(const std::string& key, const char* source) const;

    std::vector<OptionSpec> specs_;
    std::map<std::string, std::string> values_;
};

/// key=value lines, '#' comments, blank lines ignored.
std::map<std::string, std::string> parse_config_file(const std::filesystem::path& path);

/// version string plus content hashes of every consumed input file.
void write_manifest(const std::filesystem::path& dir,
                    const std::vector<std::pair<std::string, std::string>>& entries);

extern const char* kVersionString;

} // namespace paglab::cli
