#include "fsce/flops.hpp"

namespace fsce::flops {
namespace {
thread_local bool g_active = false;
thread_local std::uint64_t g_value = 0;
}  // namespace

bool Counter::active() { return g_active; }
void Counter::add(std::uint64_t n) {
  if (g_active) g_value += n;
}
std::uint64_t Counter::value() { return g_value; }

CountScope::CountScope() : prev_active_(g_active), prev_value_(g_value) {
  g_active = true;
  g_value = 0;
}

CountScope::~CountScope() {
  g_active = prev_active_;
  g_value = prev_value_;
}

std::uint64_t CountScope::total() const { return g_value; }

}  // namespace fsce::flops
