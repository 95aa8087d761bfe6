#include "ppg2abp/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <cstring>
#include <string>

#include "ppg2abp/errors.hpp"

namespace ppg2abp::kernels {

namespace {

const Kernels* lookup(const char* name) {
  if (std::strcmp(name, "scalar") == 0) return &scalar_kernels();
  if (std::strcmp(name, "avx2") == 0) return avx2_kernels();
  return nullptr;
}

const Kernels* initial_choice() {
  if (const char* env = std::getenv("PPG2ABP_KERNELS")) {
    const Kernels* k = lookup(env);
    if (!k)
      throw ArgumentError("PPG2ABP_KERNELS=" + std::string(env) +
                          ": unknown or unsupported kernel variant");
    return k;
  }
  if (const Kernels* k = avx2_kernels()) return k;
  return &scalar_kernels();
}

std::atomic<const Kernels*>& slot() {
  static std::atomic<const Kernels*> s{initial_choice()};
  return s;
}

}  // namespace

const Kernels& active() { return *slot().load(std::memory_order_relaxed); }

void select(const char* name) {
  const Kernels* k = lookup(name);
  if (!k)
    throw ArgumentError(std::string("kernel variant '") + name +
                        "' is unknown or unsupported on this CPU");
  slot().store(k, std::memory_order_relaxed);
}

}  // namespace ppg2abp::kernels
