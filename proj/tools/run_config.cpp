#include "run_config.hpp"

#include <algorithm>
#include <fstream>
#include <stdexcept>

namespace paglab::cli {

const char* kVersionString = "paglab 0.1.0";

RunConfig::RunConfig(std::vector<OptionSpec> specs) : specs_(std::move(specs)) {
    for (const OptionSpec& s : specs_) {
        if (!s.default_value.empty()) values_[s.key] = s.default_value;
    }
}

void RunConfig::check_known(const std::string& key, const char* source) const {
    for (const OptionSpec& s : specs_) {
        if (s.key == key) return;
    }
    throw std::runtime_error(std::string(source) + ": unknown key '" + key + "'");
}

void RunConfig::apply_preset(const std::string& name, const std::map<std::string, std::string>& values) {
    for (const auto& [k, v] : values) {
        check_known(k, ("preset " + name).c_str());
        values_[k] = v;
    }
}

void RunConfig::load_file(const std::filesystem::path& path) {
    for (const auto& [k, v] : parse_config_file(path)) {
        check_known(k, path.string().c_str());
        values_[k] = v;
    }
}

void RunConfig::set_override(const std::string& key, const std::string& value) {
    check_known(key, "command line");
    values_[key] = value;
}

bool RunConfig::has(const std::string& key) const {
    check_known(key, "lookup");
    auto it = values_.find(key);
    return it != values_.end() && !it->second.empty();
}

std::string RunConfig::get_string(const std::string& key) const {
    check_known(key, "lookup");
    auto it = values_.find(key);
    if (it == values_.end() || it->second.empty()) {
        throw std::runtime_error("missing required option '" + key + "'");
    }
    return it->second;
}

std::uint64_t RunConfig::get_u64(const std::string& key) const {
    const std::string v = get_string(key);
    try {
        std::size_t used = 0;
        const unsigned long long out = std::stoull(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return out;
    } catch (const std::exception&) {
        throw std::runtime_error("option '" + key + "' expects an unsigned integer, got '" + v + "'");
    }
}

double RunConfig::get_double(const std::string& key) const {
    const std::string v = get_string(key);
    try {
        std::size_t used = 0;
        const double out = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return out;
    } catch (const std::exception&) {
        throw std::runtime_error("option '" + key + "' expects a number, got '" + v + "'");
    }
}

bool RunConfig::get_bool(const std::string& key) const {
    const std::string v = get_string(key);
    if (v == "true" || v == "1" || v == "on") return true;
    if (v == "false" || v == "0" || v == "off") return false;
    throw std::runtime_error("option '" + key + "' expects true/false, got '" + v + "'");
}

std::optional<double> RunConfig::get_optional_double(const std::string& key) const {
    if (!has(key)) return std::nullopt;
    return get_double(key);
}

std::optional<std::string> RunConfig::get_optional_string(const std::string& key) const {
    if (!has(key)) return std::nullopt;
    return get_string(key);
}

std::string RunConfig::resolved_text() const {
    std::string out;
    for (const auto& [k, v] : values_) {
        if (v.empty()) continue;
        out += k + "=" + v + "\n";
    }
    return out;
}

void RunConfig::write_resolved(const std::filesystem::path& path) const {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write resolved config to " + path.string());
    os << resolved_text();
}

std::map<std::string, std::string> parse_config_file(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open config file " + path.string());
    std::map<std::string, std::string> out;
    std::string line;
    std::size_t line_no = 0;
    auto trim = [](std::string s) {
        const auto b = s.find_first_not_of(" \t\r");
        const auto e = s.find_last_not_of(" \t\r");
        return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    while (std::getline(is, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": expected key=value");
        }
        out[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    return out;
}

void write_manifest(const std::filesystem::path& dir,
                    const std::vector<std::pair<std::string, std::string>>& entries) {
    std::ofstream os(dir / "manifest.txt");
    if (!os) throw std::runtime_error("cannot write manifest to " + dir.string());
    os << "version=" << kVersionString << "\n";
    for (const auto& [k, v] : entries) os << k << "=" << v << "\n";
}

} // namespace paglab::cli
