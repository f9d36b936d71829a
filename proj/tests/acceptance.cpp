#include <cstdio>
#include <cstdlib>
#include <set>
#include <string>

#include "balayage/acceptance.hpp"

using namespace balayage;

// Runs every criterion (or the ids given as arguments) and prints one PASS/FAIL line each.
int main(int argc, char** argv) {
    std::set<int> only;
    for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
    bool all = true;
    const auto criteria = acceptance::all_criteria();
    for (std::size_t k = 0; k < criteria.size(); ++k) {
        const int id = static_cast<int>(k) + 1;
        if (!only.empty() && !only.count(id)) continue;
        const auto r = acceptance::run_criterion(id);
        all = all && r.pass;
        std::printf("%s criterion %d: %s (%.1f s)\n", r.pass ? "PASS" : "FAIL", r.id, r.title.c_str(), r.seconds);
        for (const auto& [name, c] : r.details["checks"].items())
            std::printf("    %-32s %-4s %.6g\n", name.c_str(), c["pass"].get<bool>() ? "ok" : "FAIL", c["value"].get<double>());
        if (r.details.contains("exception")) std::printf("    exception: %s\n", r.details["exception"].get<std::string>().c_str());
        std::fflush(stdout);
    }
    return all ? 0 : 1;
}
