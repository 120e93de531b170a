// One line per acceptance criterion; exit status reflects the whole battery.

#include <cstdlib>
#include <iostream>
#include <string>

#include "agedist/acceptance.hpp"

int main(int argc, char** argv) {
    agedist::AcceptanceOptions opt;
    if (argc > 1) opt.horizon = std::stoull(argv[1]);
    bool all = true;
    agedist::run_acceptance(opt, [&](const agedist::CheckResult& r) {
        agedist::print_check(std::cout, r);
        std::cout.flush();
        all &= r.pass;
    });
    std::cout << (all ? "ALL PASS" : "FAILURES") << '\n';
    return all ? EXIT_SUCCESS : EXIT_FAILURE;
}
