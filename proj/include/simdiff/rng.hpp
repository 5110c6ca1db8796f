#pragma once

#include <cstdint>
#include <initializer_list>
#include <span>
#include <vector>

namespace simdiff {

std::uint64_t splitmix64(std::uint64_t x);

// Derives an independent stream key from a base seed and a path of ids,
// e.g. substream(seed, {draw, step}).
std::uint64_t substream(std::uint64_t seed, std::initializer_list<std::uint64_t> ids);

// Counter-based generator: value i of a stream is a pure function of
// (key, i), so streams can be regenerated or split without shared state.
class CounterRng {
public:
    explicit CounterRng(std::uint64_t key) : key_(key) {}

    std::uint64_t next_u64() { return splitmix64(key_ ^ splitmix64(counter_++)); }
    // Uniform on the open interval (0, 1).
    double uniform();
    double normal();
    // Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n);
    void fill_normal(std::span<double> out);

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace simdiff
