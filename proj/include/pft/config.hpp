#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "pft/tensor.hpp"
#include "pft/window_attention.hpp"

namespace pft {

class ConfigError : public Error {
public:
    using Error::Error;
};

/// Parsed `key = value` text. Blank lines and `#` comments are ignored;
/// duplicate keys are an error. Lookups mark keys as used so callers can
/// reject unknown keys afterwards.
class KeyValueFile {
public:
    static KeyValueFile parse(std::string_view text);
    static KeyValueFile load(const std::string& path);

    bool has(const std::string& key) const { return values_.count(key) != 0; }
    std::optional<std::string> take(const std::string& key);
    std::optional<std::size_t> take_size(const std::string& key);
    std::optional<double> take_double(const std::string& key);
    std::optional<bool> take_bool(const std::string& key);

    std::vector<std::string> unused_keys() const;
    /// Throws ConfigError naming every key no consumer asked for.
    void reject_unused() const;

private:
    std::map<std::string, std::string> values_;
    std::set<std::string> used_;
};

/// Architecture hyperparameters. Block counts default to the published
/// topology (3 RSTBs, 4 PFT blocks of 6 layers); the remaining defaults are
/// implementation choices.
struct ModelConfig {
    std::size_t scale = 4;
    std::size_t embed_dim = 96;
    std::size_t window = 8;
    std::size_t heads = 6;
    std::size_t mlp_ratio = 2;
    std::size_t rstb_count = 3;
    std::size_t stl_per_rstb = 6;
    std::size_t refine_rstb_count = 1;
    std::size_t pft_blocks = 4;
    std::size_t pft_layers_per_block = 6;
    bool qkv_bias = true;

    static ModelConfig toy();

    /// Presets "default" and "toy", otherwise a config file path.
    static ModelConfig resolve(const std::string& name_or_path);

    /// Reads model keys from `kv`, starting from `preset = ...` if present.
    static ModelConfig from(KeyValueFile& kv);

    std::vector<std::string> violations() const;
    void validate() const;

    WindowSpec window_spec() const { return {window, heads}; }
    std::string to_text() const;

    bool operator==(const ModelConfig&) const = default;
};

}  // namespace pft
