#pragma once

#include <fftw3.h>

#include <complex>
#include <cstddef>
#include <map>
#include <mutex>
#include <span>

namespace midlevel::detail {

// FFTW planning is not thread-safe; execution with new arrays is. Plans are
// created once per size under a global lock and reused by every caller.
class PlanCache {
public:
    static fftw_plan r2c(std::size_t n)
    {
        static PlanCache cache;
        std::lock_guard lock(cache.mutex_);
        auto it = cache.plans_.find(n);
        if (it != cache.plans_.end())
            return it->second;
        double* in = fftw_alloc_real(n);
        fftw_complex* out = fftw_alloc_complex(n / 2 + 1);
        fftw_plan plan = fftw_plan_dft_r2c_1d(static_cast<int>(n), in, out, FFTW_ESTIMATE);
        fftw_free(in);
        fftw_free(out);
        cache.plans_.emplace(n, plan);
        return plan;
    }

    PlanCache(const PlanCache&) = delete;
    PlanCache& operator=(const PlanCache&) = delete;

private:
    PlanCache() = default;
    ~PlanCache()
    {
        for (auto& [n, plan] : plans_)
            fftw_destroy_plan(plan);
    }

    std::mutex mutex_;
    std::map<std::size_t, fftw_plan> plans_;
};

/// Real-input forward FFT of a fixed size with its own aligned buffers.
/// One instance per thread; the underlying plan is shared.
class RealFft {
public:
    explicit RealFft(std::size_t n)
        : n_(n), plan_(PlanCache::r2c(n)), in_(fftw_alloc_real(n)), out_(fftw_alloc_complex(n / 2 + 1))
    {
    }
    ~RealFft()
    {
        fftw_free(in_);
        fftw_free(out_);
    }
    RealFft(const RealFft&) = delete;
    RealFft& operator=(const RealFft&) = delete;

    std::size_t size() const noexcept { return n_; }
    std::size_t bins() const noexcept { return n_ / 2 + 1; }

    std::span<double> input() noexcept { return {in_, n_}; }

    /// Transforms the current contents of input(); result has bins() entries.
    std::span<const std::complex<double>> execute()
    {
        fftw_execute_dft_r2c(plan_, in_, out_);
        return {reinterpret_cast<const std::complex<double>*>(out_), bins()};
    }

private:
    std::size_t n_;
    fftw_plan plan_;
    double* in_;
    fftw_complex* out_;
};

} // namespace midlevel::detail
