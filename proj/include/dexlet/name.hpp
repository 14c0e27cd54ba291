#pragma once

#include <atomic>
#include <cstdint>
#include <string>

namespace dexlet {

// A binder identity. Display text plus a program-unique uid; all comparisons
// go through the uid so shadowing in the surface syntax never confuses passes.
struct Name {
  std::string text;
  std::uint64_t uid = 0;

  friend bool operator==(const Name& a, const Name& b) { return a.uid == b.uid; }
  friend bool operator!=(const Name& a, const Name& b) { return a.uid != b.uid; }
  friend bool operator<(const Name& a, const Name& b) { return a.uid < b.uid; }
};

// Program-wide fresh-name counter. Atomic so transform passes may run on
// worker threads; reset at the start of each pipeline for reproducible dumps.
class NameSupply {
 public:
  static Name fresh(std::string text) {
    return Name{std::move(text), counter().fetch_add(1, std::memory_order_relaxed)};
  }
  static void reset(std::uint64_t next = 1) {
    counter().store(next, std::memory_order_relaxed);
  }

 private:
  static std::atomic<std::uint64_t>& counter() {
    static std::atomic<std::uint64_t> c{1};
    return c;
  }
};

}  // namespace dexlet
