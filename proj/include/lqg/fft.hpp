#pragma once

#include <complex>
#include <cstddef>
#include <map>
#include <mutex>
#include <vector>

#include <fftw3.h>

namespace lqg::fft {

// Thin serial FFTW wrapper for 2-D real transforms. Plans are cached per
// shape and shared; fftw_execute_*_dft with new arrays is thread safe, plan
// creation is not, hence the mutex. All buffers come from fftw_malloc so a
// cached plan's alignment assumptions hold for every execution.

template <class T>
struct fftw_buffer {
    T* data = nullptr;
    std::size_t n = 0;

    fftw_buffer() = default;
    explicit fftw_buffer(std::size_t n_) : n(n_) {
        data = static_cast<T*>(fftw_malloc(sizeof(T) * n_));
    }
    ~fftw_buffer() { if (data) fftw_free(data); }
    fftw_buffer(const fftw_buffer&) = delete;
    fftw_buffer& operator=(const fftw_buffer&) = delete;
    fftw_buffer(fftw_buffer&& o) noexcept : data(o.data), n(o.n) { o.data = nullptr; o.n = 0; }
    fftw_buffer& operator=(fftw_buffer&& o) noexcept {
        if (this != &o) {
            if (data) fftw_free(data);
            data = o.data; n = o.n;
            o.data = nullptr; o.n = 0;
        }
        return *this;
    }
    T* get() const { return data; }
};

using real_buffer = fftw_buffer<double>;
using complex_buffer = fftw_buffer<fftw_complex>;

class plan_cache {
  public:
    static plan_cache& instance() {
        static plan_cache c;
        return c;
    }

    // ny rows of nx reals -> ny rows of nx/2+1 complex.
    fftw_plan forward(int nx, int ny) {
        std::lock_guard<std::mutex> lock(mu_);
        auto key = std::make_pair(nx, ny);
        auto it = fwd_.find(key);
        if (it != fwd_.end()) return it->second;
        real_buffer in(static_cast<std::size_t>(nx) * ny);
        complex_buffer out(static_cast<std::size_t>(nx / 2 + 1) * ny);
        fftw_plan p = fftw_plan_dft_r2c_2d(ny, nx, in.get(), out.get(), FFTW_ESTIMATE);
        fwd_[key] = p;
        return p;
    }

    fftw_plan backward(int nx, int ny) {
        std::lock_guard<std::mutex> lock(mu_);
        auto key = std::make_pair(nx, ny);
        auto it = bwd_.find(key);
        if (it != bwd_.end()) return it->second;
        complex_buffer in(static_cast<std::size_t>(nx / 2 + 1) * ny);
        real_buffer out(static_cast<std::size_t>(nx) * ny);
        fftw_plan p = fftw_plan_dft_c2r_2d(ny, nx, in.get(), out.get(), FFTW_ESTIMATE);
        bwd_[key] = p;
        return p;
    }

  private:
    plan_cache() = default;
    std::mutex mu_;
    std::map<std::pair<int, int>, fftw_plan> fwd_, bwd_;
};

inline void forward_r2c(int nx, int ny, double* in, fftw_complex* out) {
    fftw_execute_dft_r2c(plan_cache::instance().forward(nx, ny), in, out);
}

inline void backward_c2r(int nx, int ny, fftw_complex* in, double* out) {
    fftw_execute_dft_c2r(plan_cache::instance().backward(nx, ny), in, out);
}

inline int next_fft_size(int n) {
    // Powers of two with an optional factor 3: dense enough that padding
    // waste stays under ~30%.
    int s = 1;
    while (s < n) s <<= 1;
    if (s >= 4 && (s / 4) * 3 >= n) return (s / 4) * 3;
    return s;
}

}
