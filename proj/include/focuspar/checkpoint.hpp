#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "focuspar/autodiff.hpp"
#include "focuspar/hash.hpp"

namespace focuspar {

/// On-disk layout:
///   "FOCK1" | u32 entry count | per entry: u32 name length, name bytes,
///   u32 rank, u32 dims[rank], float32 data | 32-byte config hash.
/// All integers and floats little-endian.
struct CheckpointEntry {
    std::string name;
    std::vector<std::uint32_t> dims;
    std::vector<float> data;
    friend bool operator==(const CheckpointEntry&, const CheckpointEntry&) = default;
};

struct Checkpoint {
    std::vector<CheckpointEntry> entries;
    Digest config_hash{};
    friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

inline constexpr char kCheckpointMagic[5] = {'F', 'O', 'C', 'K', '1'};
inline constexpr const char* kStepEntry = "meta.step";

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline void put_f32(std::string& out, float f) { put_u32(out, std::bit_cast<std::uint32_t>(f)); }

class Reader {
public:
    explicit Reader(const std::string& bytes) : b_(bytes) {}
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= std::uint32_t(static_cast<unsigned char>(b_[pos_ + i])) << (8 * i);
        pos_ += 4;
        return v;
    }
    float f32() { return std::bit_cast<float>(u32()); }
    std::string bytes(std::size_t n) {
        need(n);
        std::string s = b_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    bool done() const { return pos_ == b_.size(); }

private:
    void need(std::size_t n) const {
        if (pos_ + n > b_.size()) throw ValidationError("checkpoint truncated");
    }
    const std::string& b_;
    std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string encode_checkpoint(const Checkpoint& ck) {
    std::string out(kCheckpointMagic, sizeof kCheckpointMagic);
    detail::put_u32(out, static_cast<std::uint32_t>(ck.entries.size()));
    for (const auto& e : ck.entries) {
        detail::put_u32(out, static_cast<std::uint32_t>(e.name.size()));
        out += e.name;
        detail::put_u32(out, static_cast<std::uint32_t>(e.dims.size()));
        std::size_t n = 1;
        for (auto d : e.dims) {
            detail::put_u32(out, d);
            n *= d;
        }
        require(n == e.data.size(), "checkpoint entry " + e.name + ": data does not match dims");
        for (float f : e.data) detail::put_f32(out, f);
    }
    out.append(reinterpret_cast<const char*>(ck.config_hash.data()), ck.config_hash.size());
    return out;
}

inline Checkpoint decode_checkpoint(const std::string& bytes) {
    detail::Reader r(bytes);
    if (r.bytes(5) != std::string(kCheckpointMagic, 5)) throw ValidationError("not a checkpoint (bad magic)");
    Checkpoint ck;
    const std::uint32_t count = r.u32();
    for (std::uint32_t i = 0; i < count; ++i) {
        CheckpointEntry e;
        e.name = r.bytes(r.u32());
        const std::uint32_t rank = r.u32();
        std::size_t n = 1;
        for (std::uint32_t k = 0; k < rank; ++k) {
            e.dims.push_back(r.u32());
            n *= e.dims.back();
        }
        e.data.resize(n);
        for (auto& f : e.data) f = r.f32();
        ck.entries.push_back(std::move(e));
    }
    const std::string h = r.bytes(32);
    std::memcpy(ck.config_hash.data(), h.data(), 32);
    if (!r.done()) throw ValidationError("checkpoint has trailing bytes");
    return ck;
}

template <class T>
Checkpoint make_checkpoint(const ParamStore<T>& params, const Digest& config_hash, long step) {
    Checkpoint ck;
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& p = params[i];
        CheckpointEntry e{p.name, {static_cast<std::uint32_t>(p.value.rows()), static_cast<std::uint32_t>(p.value.cols())}, {}};
        e.data.reserve(p.value.size());
        for (std::size_t k = 0; k < p.value.size(); ++k) e.data.push_back(static_cast<float>(p.value[k]));
        ck.entries.push_back(std::move(e));
    }
    ck.entries.push_back(CheckpointEntry{kStepEntry, {1}, {static_cast<float>(step)}});
    ck.config_hash = config_hash;
    return ck;
}

inline long checkpoint_step(const Checkpoint& ck) {
    for (const auto& e : ck.entries)
        if (e.name == kStepEntry && e.data.size() == 1) return static_cast<long>(e.data[0]);
    return 0;
}

/// Copies entries into matching parameters. Every parameter must be present
/// with the same shape; a config-hash mismatch is an error unless `force`.
template <class T>
void load_checkpoint_into(const Checkpoint& ck, ParamStore<T>& params, const Digest& expected_hash, bool force = false) {
    if (!force && ck.config_hash != expected_hash)
        throw ValidationError("checkpoint config hash " + to_hex(ck.config_hash) + " does not match config " +
                              to_hex(expected_hash));
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& p = params[i];
        const CheckpointEntry* found = nullptr;
        for (const auto& e : ck.entries)
            if (e.name == p.name) found = &e;
        require(found != nullptr, "checkpoint lacks parameter " + p.name);
        require(found->dims.size() == 2 && found->dims[0] == p.value.rows() && found->dims[1] == p.value.cols(),
                "checkpoint shape mismatch for " + p.name);
        for (std::size_t k = 0; k < p.value.size(); ++k) p.value[k] = static_cast<T>(found->data[k]);
    }
}

inline void write_bytes(const std::filesystem::path& path, const std::string& bytes) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ValidationError("cannot write " + path.string());
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw ValidationError("write failed: " + path.string());
}

inline std::string read_bytes(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ValidationError("cannot open " + path.string());
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
    write_bytes(path, encode_checkpoint(ck));
}
inline Checkpoint load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(read_bytes(path)); }

}  // namespace focuspar
