#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>

namespace weaver {

// Anything a caller can trigger with bad inputs or bad data.
// The CLI maps these to exit code 2 plus a JSON message on stderr.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

[[noreturn]] void fail(const std::string& msg);

// Probability clamp applied everywhere probabilities feed log-space math.
constexpr double kProbEps = 1e-6;

double clamp_prob(double p);

// FNV-1a 64-bit over a canonical byte stream. Used for config and dataset
// hashes: stability across runs is what matters, collision resistance is not.
class Fnv1a {
public:
    void update(const void* data, std::size_t len);
    void update(const std::string& s);
    void update_u64(std::uint64_t v);
    void update_double(double v);
    std::string hex() const;

private:
    std::uint64_t h_ = 1469598103934665603ull;
};

std::string fnv1a_hex(const std::string& bytes);

// Worker budget for parallel loops: min(WEAVER_THREADS, hardware_concurrency),
// at least 1. WEAVER_THREADS=1 forces serial execution.
std::size_t thread_budget();

// Index-parallel loop over [0, count). Workers write to disjoint slots only,
// so results do not depend on the schedule.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& fn);

}  // namespace weaver
