#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace brainseg {

/// 64-bit FNV-1a, used for config and dataset digests.
class Fnv1a {
 public:
  void update(std::string_view bytes);
  void update(const void* data, std::size_t size);
  std::uint64_t value() const noexcept { return hash_; }
  std::string hex() const;

 private:
  std::uint64_t hash_ = 0xcbf29ce484222325ULL;
};

std::string fnv1a_hex(std::string_view bytes);

}  // namespace brainseg
