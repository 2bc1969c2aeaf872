#include "pft/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace pft {

namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

}  // namespace

KeyValueFile KeyValueFile::parse(std::string_view text) {
    KeyValueFile kv;
    std::size_t line_no = 0;
    std::istringstream in{std::string(text)};
    std::string line;
    while (std::getline(in, line)) {
        ++line_no;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        const std::string body = trim(line);
        if (body.empty()) continue;
        const auto eq = body.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config line " + std::to_string(line_no) + ": expected `key = value`");
        }
        std::string key = trim(std::string_view(body).substr(0, eq));
        std::string value = trim(std::string_view(body).substr(eq + 1));
        if (key.empty()) throw ConfigError("config line " + std::to_string(line_no) + ": empty key");
        if (!kv.values_.emplace(key, value).second) {
            throw ConfigError("config line " + std::to_string(line_no) + ": duplicate key `" + key + "`");
        }
    }
    return kv;
}

KeyValueFile KeyValueFile::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

std::optional<std::string> KeyValueFile::take(const std::string& key) {
    auto it = values_.find(key);
    if (it == values_.end()) return std::nullopt;
    used_.insert(key);
    return it->second;
}

std::optional<std::size_t> KeyValueFile::take_size(const std::string& key) {
    auto v = take(key);
    if (!v) return std::nullopt;
    std::size_t out = 0;
    auto [ptr, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
    if (ec != std::errc() || ptr != v->data() + v->size()) {
        throw ConfigError("config key `" + key + "`: expected a non-negative integer, got `" + *v + "`");
    }
    return out;
}

std::optional<double> KeyValueFile::take_double(const std::string& key) {
    auto v = take(key);
    if (!v) return std::nullopt;
    try {
        std::size_t used = 0;
        double d = std::stod(*v, &used);
        if (used != v->size()) throw std::invalid_argument("trailing");
        return d;
    } catch (const std::exception&) {
        throw ConfigError("config key `" + key + "`: expected a number, got `" + *v + "`");
    }
}

std::optional<bool> KeyValueFile::take_bool(const std::string& key) {
    auto v = take(key);
    if (!v) return std::nullopt;
    if (*v == "true" || *v == "1" || *v == "on") return true;
    if (*v == "false" || *v == "0" || *v == "off") return false;
    throw ConfigError("config key `" + key + "`: expected true/false, got `" + *v + "`");
}

std::vector<std::string> KeyValueFile::unused_keys() const {
    std::vector<std::string> out;
    for (const auto& [k, v] : values_)
        if (!used_.count(k)) out.push_back(k);
    return out;
}

void KeyValueFile::reject_unused() const {
    auto unused = unused_keys();
    if (unused.empty()) return;
    std::string msg = "unknown config key(s):";
    for (const auto& k : unused) msg += " " + k;
    throw ConfigError(msg);
}

ModelConfig ModelConfig::toy() {
    ModelConfig c;
    c.scale = 2;
    c.embed_dim = 16;
    c.window = 4;
    c.heads = 2;
    c.mlp_ratio = 2;
    c.rstb_count = 1;
    c.stl_per_rstb = 2;
    c.refine_rstb_count = 1;
    c.pft_blocks = 1;
    c.pft_layers_per_block = 2;
    return c;
}

ModelConfig ModelConfig::resolve(const std::string& name_or_path) {
    if (name_or_path == "default") return ModelConfig{};
    if (name_or_path == "toy") return toy();
    KeyValueFile kv = KeyValueFile::load(name_or_path);
    ModelConfig cfg = from(kv);
    kv.reject_unused();
    return cfg;
}

ModelConfig ModelConfig::from(KeyValueFile& kv) {
    ModelConfig c;
    if (auto preset = kv.take("preset")) {
        if (*preset == "toy") {
            c = toy();
        } else if (*preset != "default") {
            throw ConfigError("unknown preset `" + *preset + "` (expected default or toy)");
        }
    }
    auto set = [&kv](const char* key, std::size_t& field) {
        if (auto v = kv.take_size(key)) field = *v;
    };
    set("scale", c.scale);
    set("embed_dim", c.embed_dim);
    set("window", c.window);
    set("heads", c.heads);
    set("mlp_ratio", c.mlp_ratio);
    set("rstb_count", c.rstb_count);
    set("stl_per_rstb", c.stl_per_rstb);
    set("refine_rstb_count", c.refine_rstb_count);
    set("pft_blocks", c.pft_blocks);
    set("pft_layers_per_block", c.pft_layers_per_block);
    if (auto v = kv.take_bool("qkv_bias")) c.qkv_bias = *v;
    c.validate();
    return c;
}

std::vector<std::string> ModelConfig::violations() const {
    std::vector<std::string> v;
    if (scale != 2 && scale != 4) v.push_back("scale must be 2 or 4");
    if (embed_dim == 0) v.push_back("embed_dim must be >= 1");
    if (window == 0) v.push_back("window must be >= 1");
    if (heads == 0) v.push_back("heads must be >= 1");
    if (heads != 0 && embed_dim % heads != 0) v.push_back("embed_dim must be divisible by heads");
    if (mlp_ratio == 0) v.push_back("mlp_ratio must be >= 1");
    if (rstb_count == 0) v.push_back("rstb_count must be >= 1");
    if (stl_per_rstb == 0 || stl_per_rstb % 2 != 0) v.push_back("stl_per_rstb must be even and >= 2");
    if (refine_rstb_count == 0) v.push_back("refine_rstb_count must be >= 1");
    if (pft_blocks == 0) v.push_back("pft_blocks must be >= 1");
    if (pft_layers_per_block == 0) v.push_back("pft_layers_per_block must be >= 1");
    return v;
}

void ModelConfig::validate() const {
    auto v = violations();
    if (v.empty()) return;
    std::string msg = "invalid model config:";
    for (std::size_t i = 0; i < v.size(); ++i) msg += (i ? "; " : " ") + v[i];
    throw ConfigError(msg);
}

std::string ModelConfig::to_text() const {
    std::ostringstream os;
    os << "scale = " << scale << '\n'
       << "embed_dim = " << embed_dim << '\n'
       << "window = " << window << '\n'
       << "heads = " << heads << '\n'
       << "mlp_ratio = " << mlp_ratio << '\n'
       << "rstb_count = " << rstb_count << '\n'
       << "stl_per_rstb = " << stl_per_rstb << '\n'
       << "refine_rstb_count = " << refine_rstb_count << '\n'
       << "pft_blocks = " << pft_blocks << '\n'
       << "pft_layers_per_block = " << pft_layers_per_block << '\n'
       << "qkv_bias = " << (qkv_bias ? "true" : "false") << '\n';
    return os.str();
}

}  // namespace pft
