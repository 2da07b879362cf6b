#include "carelink/error.hpp"
#include "carelink/store.hpp"

#include <sodium.h>

namespace carelink {

namespace {

void ensure_sodium() {
    static const int rc = sodium_init();
    if (rc < 0) {
        throw StorageError("libsodium failed to initialise");
    }
}

bool is_hex_key(std::string_view s) {
    if (s.size() != Cipher::key_size * 2) {
        return false;
    }
    for (char c : s) {
        const bool hex = (c >= '0' && c <= '9') || (c >= 'a' && c <= 'f') || (c >= 'A' && c <= 'F');
        if (!hex) {
            return false;
        }
    }
    return true;
}

}  // namespace

Cipher::Cipher(const Key& key) : key_(key) { ensure_sodium(); }

Cipher Cipher::from_secret(std::string_view secret) {
    ensure_sodium();
    if (secret.empty()) {
        throw ConfigurationError("store key must not be empty");
    }
    Key key{};
    if (is_hex_key(secret)) {
        std::size_t written = 0;
        if (sodium_hex2bin(key.data(), key.size(), secret.data(), secret.size(), nullptr, &written, nullptr) != 0 ||
            written != key.size()) {
            throw ConfigurationError("store key is not valid hex");
        }
    } else {
        crypto_generichash(key.data(), key.size(), reinterpret_cast<const unsigned char*>(secret.data()),
                           secret.size(), nullptr, 0);
    }
    return Cipher(key);
}

Cipher Cipher::random() {
    ensure_sodium();
    Key key{};
    crypto_aead_xchacha20poly1305_ietf_keygen(key.data());
    return Cipher(key);
}

Bytes Cipher::seal(std::string_view plaintext, std::string_view associated) const {
    constexpr std::size_t nonce_len = crypto_aead_xchacha20poly1305_ietf_NPUBBYTES;
    Bytes out(nonce_len + plaintext.size() + crypto_aead_xchacha20poly1305_ietf_ABYTES);
    randombytes_buf(out.data(), nonce_len);
    unsigned long long clen = 0;
    crypto_aead_xchacha20poly1305_ietf_encrypt(
        out.data() + nonce_len, &clen, reinterpret_cast<const unsigned char*>(plaintext.data()), plaintext.size(),
        reinterpret_cast<const unsigned char*>(associated.data()), associated.size(), nullptr, out.data(),
        key_.data());
    out.resize(nonce_len + clen);
    return out;
}

std::string Cipher::open(const Bytes& blob, std::string_view associated) const {
    constexpr std::size_t nonce_len = crypto_aead_xchacha20poly1305_ietf_NPUBBYTES;
    constexpr std::size_t tag_len = crypto_aead_xchacha20poly1305_ietf_ABYTES;
    if (blob.size() < nonce_len + tag_len) {
        throw StorageError("encrypted record is truncated");
    }
    std::string out(blob.size() - nonce_len - tag_len, '\0');
    unsigned long long mlen = 0;
    if (crypto_aead_xchacha20poly1305_ietf_decrypt(
            reinterpret_cast<unsigned char*>(out.data()), &mlen, nullptr, blob.data() + nonce_len,
            blob.size() - nonce_len, reinterpret_cast<const unsigned char*>(associated.data()), associated.size(),
            blob.data(), key_.data()) != 0) {
        throw StorageError("record failed authentication (wrong key or corrupted data)");
    }
    out.resize(mlen);
    return out;
}

}  // namespace carelink
