#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace sleepeff {

// 64-bit FNV-1a.
class Fnv1a64 {
 public:
  static constexpr std::uint64_t kOffset = 0xcbf29ce484222325ULL;
  static constexpr std::uint64_t kPrime = 0x100000001b3ULL;

  void update(std::string_view bytes) noexcept {
    for (unsigned char c : bytes) {
      state_ ^= c;
      state_ *= kPrime;
    }
  }

  template <typename T>
  void update_pod(const T& value) noexcept {
    update(std::string_view(reinterpret_cast<const char*>(&value), sizeof(T)));
  }

  std::uint64_t digest() const noexcept { return state_; }

 private:
  std::uint64_t state_ = kOffset;
};

inline std::uint64_t fnv1a64(std::string_view bytes) noexcept {
  Fnv1a64 h;
  h.update(bytes);
  return h.digest();
}

// 16 lowercase hex digits.
std::string to_hex(std::uint64_t value);

}  // namespace sleepeff
