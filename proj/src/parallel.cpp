#include "spamm/parallel.hpp"

#include <cstdlib>
#include <string>

namespace spamm {
namespace {

int initial_threads() {
    if (const char* env = std::getenv("SPAMM_THREADS")) {
        try {
            const int n = std::stoi(env);
            if (n > 0) return n;
        } catch (...) {
        }
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

std::atomic<int>& threads() {
    static std::atomic<int> n{initial_threads()};
    return n;
}

}  // namespace

int thread_count() { return threads().load(); }

void set_thread_count(int n) { threads().store(n > 0 ? n : initial_threads()); }

}  // namespace spamm
