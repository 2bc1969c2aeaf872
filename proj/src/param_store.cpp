#include "pft/param_store.hpp"

#include <algorithm>
#include <bit>
#include <fstream>
#include <iterator>

namespace pft {

template <typename T>
void ParameterStore<T>::add(std::string name, Tensor<T> tensor) {
    if (index_.count(name)) throw Error("parameter store: duplicate name " + name);
    index_.emplace(name, entries_.size());
    entries_.push_back(Entry{std::move(name), std::move(tensor)});
}

template <typename T>
const Tensor<T>& ParameterStore<T>::get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw Error("parameter store: no parameter named " + name);
    return entries_[it->second].tensor;
}

template <typename T>
Tensor<T>& ParameterStore<T>::get(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw Error("parameter store: no parameter named " + name);
    return entries_[it->second].tensor;
}

template <typename T>
std::size_t ParameterStore<T>::parameter_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.tensor.numel();
    return n;
}

namespace {

constexpr char kMagic[4] = {'P', 'F', 'T', 'W'};

class Writer {
public:
    void bytes(const void* p, std::size_t n) {
        auto* b = static_cast<const std::uint8_t*>(p);
        out.insert(out.end(), b, b + n);
    }
    template <typename U>
    void le(U v) {
        for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    std::vector<std::uint8_t> out;
};

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> b) : buf_(b) {}

    std::span<const std::uint8_t> take(std::size_t n, const char* what) {
        if (buf_.size() - pos_ < n) {
            throw FormatError(std::string("weight file truncated while reading ") + what + " at byte " +
                              std::to_string(pos_));
        }
        auto s = buf_.subspan(pos_, n);
        pos_ += n;
        return s;
    }
    template <typename U>
    U le(const char* what) {
        auto s = take(sizeof(U), what);
        U v = 0;
        for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<U>(s[i]) << (8 * i));
        return v;
    }
    bool done() const { return pos_ == buf_.size(); }

private:
    std::span<const std::uint8_t> buf_;
    std::size_t pos_ = 0;
};

}  // namespace

template <typename T>
std::vector<std::uint8_t> encode_weights(const ParameterStore<T>& store) {
    Writer w;
    w.bytes(kMagic, 4);
    w.le<std::uint32_t>(kWeightFormatVersion);
    w.le<std::uint32_t>(static_cast<std::uint32_t>(store.size()));
    for (const auto& e : store.entries()) {
        if (e.name.size() > 0xFFFF) throw FormatError("parameter name too long: " + e.name);
        w.le<std::uint16_t>(static_cast<std::uint16_t>(e.name.size()));
        w.bytes(e.name.data(), e.name.size());
        const Shape& s = e.tensor.shape();
        if (s.size() > 0xFF) throw FormatError("parameter rank too large: " + e.name);
        w.le<std::uint8_t>(static_cast<std::uint8_t>(s.size()));
        for (std::size_t extent : s) w.le<std::uint32_t>(static_cast<std::uint32_t>(extent));
        for (T v : e.tensor.values()) w.le<std::uint32_t>(std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    }
    return std::move(w.out);
}

template <typename T>
ParameterStore<T> decode_weights(std::span<const std::uint8_t> bytes) {
    Reader r(bytes);
    auto magic = r.take(4, "magic");
    if (!std::equal(magic.begin(), magic.end(), kMagic)) throw FormatError("not a weight file (bad magic)");
    const auto version = r.le<std::uint32_t>("version");
    if (version != kWeightFormatVersion) {
        throw FormatError("unsupported weight file version " + std::to_string(version));
    }
    const auto count = r.le<std::uint32_t>("entry count");
    ParameterStore<T> store;
    for (std::uint32_t i = 0; i < count; ++i) {
        const auto len = r.le<std::uint16_t>("name length");
        auto name_bytes = r.take(len, "name");
        std::string name(name_bytes.begin(), name_bytes.end());
        const auto rank = r.le<std::uint8_t>("rank");
        Shape shape(rank);
        for (auto& extent : shape) extent = r.le<std::uint32_t>("extent");
        std::vector<T> values(shape_numel(shape));
        for (auto& v : values) v = static_cast<T>(std::bit_cast<float>(r.le<std::uint32_t>("values")));
        if (store.contains(name)) throw FormatError("weight file repeats parameter " + name);
        store.add(std::move(name), Tensor<T>(std::move(shape), std::move(values)));
    }
    if (!r.done()) throw FormatError("weight file has trailing bytes after " + std::to_string(count) + " entries");
    return store;
}

std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::string& path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("write failed for " + path);
}

template <typename T>
void save_weights(const ParameterStore<T>& store, const std::string& path) {
    write_file_bytes(path, encode_weights(store));
}

template <typename T>
ParameterStore<T> read_weights(const std::string& path) {
    auto bytes = read_file_bytes(path);
    return decode_weights<T>(bytes);
}

template class ParameterStore<float>;
template class ParameterStore<double>;
template std::vector<std::uint8_t> encode_weights(const ParameterStore<float>&);
template std::vector<std::uint8_t> encode_weights(const ParameterStore<double>&);
template ParameterStore<float> decode_weights(std::span<const std::uint8_t>);
template ParameterStore<double> decode_weights(std::span<const std::uint8_t>);
template void save_weights(const ParameterStore<float>&, const std::string&);
template void save_weights(const ParameterStore<double>&, const std::string&);
template ParameterStore<float> read_weights(const std::string&);
template ParameterStore<double> read_weights(const std::string&);

}  // namespace pft
