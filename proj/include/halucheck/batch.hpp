#pragma once

#include <algorithm>
#include <atomic>
#include <functional>
#include <thread>
#include <vector>

#include "halucheck/engine.hpp"

namespace halucheck {

/// Calls fn(i) for i in [0, n) on up to `workers` threads. Results land at their index,
/// so the output order never depends on completion order.
template <typename Result>
std::vector<Result> parallel_map(std::size_t n, std::size_t workers, const std::function<Result(std::size_t)>& fn) {
    std::vector<Result> out(n);
    workers = std::max<std::size_t>(1, std::min(workers, n));
    if (workers == 1) {
        for (std::size_t i = 0; i < n; ++i) out[i] = fn(i);
        return out;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(n);
    {
        std::vector<std::jthread> pool;
        for (std::size_t w = 0; w < workers; ++w)
            pool.emplace_back([&] {
                for (std::size_t i = next++; i < n; i = next++) {
                    try {
                        out[i] = fn(i);
                    } catch (...) {
                        errors[i] = std::current_exception();
                    }
                }
            });
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    return out;
}

struct BatchItem {
    DetectionInput input;
    SessionOutcome outcome;
};

/// Factory for the per-session judge used by match; may return null.
using JudgeFactory = std::function<std::unique_ptr<ModelBackend>(const DetectionInput&)>;

/// One session per input, sorted by input id.
inline std::vector<BatchItem> run_batch(std::vector<DetectionInput> inputs, const Detector& detector,
                                        const BackendFactory& backends, std::size_t workers,
                                        const JudgeFactory& judges = nullptr) {
    std::stable_sort(inputs.begin(), inputs.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
    return parallel_map<BatchItem>(inputs.size(), workers, [&](std::size_t i) {
        const DetectionInput& in = inputs[i];
        std::unique_ptr<ModelBackend> backend = backends ? backends(in) : nullptr;
        std::unique_ptr<ModelBackend> judge = judges ? judges(in) : nullptr;
        return BatchItem{in, detector.run(in, backend.get(), judge.get())};
    });
}

}  // namespace halucheck
