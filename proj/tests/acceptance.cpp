#include "gradconv/acceptance.hpp"

#include <cstdlib>
#include <iostream>
#include <string>

int main(int argc, char** argv) {
  std::uint64_t seed = 20240611;
  std::vector<int> ids;
  for (int i = 1; i < argc; ++i) ids.push_back(std::atoi(argv[i]));
  if (ids.empty())
    for (int i = 1; i <= static_cast<int>(gradconv::all_criteria().size()); ++i) ids.push_back(i);
  int failed = 0;
  for (int id : ids) {
    gradconv::CriterionResult r = gradconv::run_criterion(id, seed);
    gradconv::print_result(r, std::cout);
    std::cout.flush();
    failed += !r.pass;
  }
  std::cout << (ids.size() - failed) << "/" << ids.size() << " criteria passed\n";
  return failed == 0 ? 0 : 1;
}
