// One line per acceptance criterion at the pinned tolerances; nonzero exit on any failure.
#include <cstdio>
#include <cstdlib>

#include "asymscat/verification.hpp"

int main(int argc, char** argv) {
  const std::uint64_t seed = argc > 1 ? std::strtoull(argv[1], nullptr, 10) : 7;
  int failed = 0, i = 0;
  const auto ids = asymscat::acceptance_ids();
  for (const auto& id : ids) {
    const auto r = asymscat::run_acceptance(id, seed);
    failed += !r.pass;
    std::printf("[%2d] %s  %-20s %7.2fs  %s\n", ++i, r.pass ? "PASS" : "FAIL", r.id.c_str(), r.seconds, r.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%zu criteria, %d failed\n", ids.size(), failed);
  return failed ? 1 : 0;
}
