#include "galdet/hash.hpp"

#include <openssl/evp.h>

#include <array>
#include <cstring>

#include "galdet/types.hpp"

namespace galdet {

Sha256::Sha256() {
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    if (ctx == nullptr || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1) {
        EVP_MD_CTX_free(ctx);
        throw Error("sha256: failed to initialize digest context");
    }
    ctx_ = ctx;
}

Sha256::~Sha256() {
    if (ctx_ != nullptr) {
        EVP_MD_CTX_free(static_cast<EVP_MD_CTX*>(ctx_));
    }
}

void Sha256::update(const void* data, size_t size) {
    if (EVP_DigestUpdate(static_cast<EVP_MD_CTX*>(ctx_), data, size) != 1) {
        throw Error("sha256: digest update failed");
    }
}

void Sha256::update_str(std::string_view s) {
    update_u64(s.size());
    update(s.data(), s.size());
}

void Sha256::update_u32(uint32_t v) {
    std::array<unsigned char, 4> le{};
    for (int i = 0; i < 4; ++i) {
        le[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    }
    update(le.data(), le.size());
}

void Sha256::update_u64(uint64_t v) {
    std::array<unsigned char, 8> le{};
    for (int i = 0; i < 8; ++i) {
        le[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    }
    update(le.data(), le.size());
}

std::string Sha256::hex_digest() {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_DigestFinal_ex(static_cast<EVP_MD_CTX*>(ctx_), digest, &len) != 1) {
        throw Error("sha256: digest finalization failed");
    }
    static const char* hex = "0123456789abcdef";
    std::string out;
    out.reserve(2 * len);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[digest[i] >> 4]);
        out.push_back(hex[digest[i] & 0xf]);
    }
    return out;
}

std::string sha256_hex(std::string_view data) {
    Sha256 h;
    h.update(data.data(), data.size());
    return h.hex_digest();
}

}  // namespace galdet
