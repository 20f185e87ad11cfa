// Acceptance runner: one PASS/FAIL line per criterion. With arguments, runs only the named criteria.
#include <iostream>

#include "dirac/acceptance.hpp"

int main(int argc, char** argv) {
    using namespace dirac::acceptance;
    std::vector<std::string> want(argv + 1, argv + argc);
    bool all_ok = true;
    int ran = 0;
    for (const auto& [name, fn] : registry()) {
        if (!want.empty() && std::find(want.begin(), want.end(), name) == want.end()) continue;
        Result r = fn();
        ++ran;
        all_ok = all_ok && r.passed;
        std::cout << line(r) << std::endl;
    }
    if (ran == 0) {
        std::cerr << "no criterion matched\n";
        return 2;
    }
    return all_ok ? 0 : 1;
}
