#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace galdet {

/// Incremental SHA-256 with length-framed updates, so that
/// ("ab","c") and ("a","bc") hash differently.
class Sha256 {
public:
    Sha256();
    ~Sha256();
    Sha256(const Sha256&) = delete;
    Sha256& operator=(const Sha256&) = delete;

    void update(const void* data, size_t size);
    /// Length-prefixed string update.
    void update_str(std::string_view s);
    void update_u32(uint32_t v);
    void update_u64(uint64_t v);

    /// Finalizes; the object must not be updated afterwards.
    std::string hex_digest();

private:
    void* ctx_ = nullptr;
};

std::string sha256_hex(std::string_view data);

}  // namespace galdet
