#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "pft/tensor.hpp"

namespace pft {

/// Malformed or mismatched weight file.
class FormatError : public Error {
public:
    using Error::Error;
};

/// Named, ordered learnable tensors. Insertion order is the serialization
/// order.
template <typename T>
class ParameterStore {
public:
    struct Entry {
        std::string name;
        Tensor<T> tensor;
    };

    void add(std::string name, Tensor<T> tensor);
    bool contains(const std::string& name) const { return index_.count(name) != 0; }
    const Tensor<T>& get(const std::string& name) const;
    Tensor<T>& get(const std::string& name);

    std::span<const Entry> entries() const { return entries_; }
    std::span<Entry> entries() { return entries_; }
    std::size_t size() const { return entries_.size(); }
    std::size_t parameter_count() const;

private:
    std::vector<Entry> entries_;
    std::unordered_map<std::string, std::size_t> index_;
};

// Weight file layout, all integers little-endian:
//   "PFTW" | u32 version (1) | u32 entry count
//   per entry: u16 name length | name bytes | u8 rank | rank x u32 extent |
//              numel x f32 value
inline constexpr std::uint32_t kWeightFormatVersion = 1;

template <typename T>
std::vector<std::uint8_t> encode_weights(const ParameterStore<T>& store);

/// Parses a weight file image; throws FormatError on bad magic, version or
/// truncation.
template <typename T>
ParameterStore<T> decode_weights(std::span<const std::uint8_t> bytes);

template <typename T>
void save_weights(const ParameterStore<T>& store, const std::string& path);

template <typename T>
ParameterStore<T> read_weights(const std::string& path);

std::vector<std::uint8_t> read_file_bytes(const std::string& path);
void write_file_bytes(const std::string& path, std::span<const std::uint8_t> bytes);

}  // namespace pft
