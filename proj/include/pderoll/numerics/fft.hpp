#pragma once

// Batched 2D complex FFT over the trailing two axes, backed by FFTW.
//
// Convention: forward is unnormalized with exp(-2*pi*i*k*x/N); `inverse`
// uses exp(+2*pi*i*k*x/N) and is also unnormalized here. The 1/N factor of
// the inverse transform is applied by callers (see ops::ifft2).

#include <fftw3.h>

#include <complex>
#include <cstddef>
#include <algorithm>
#include <map>
#include <new>
#include <mutex>
#include <span>
#include <stdexcept>
#include <tuple>
#include <vector>

namespace pderoll::fft {

namespace detail {

template <class T>
struct Fftw;

template <>
struct Fftw<double> {
  using plan = fftw_plan;
  using cplx = fftw_complex;
  static plan make(int howmany, int h, int w, cplx* in, cplx* out, int sign) {
    int n[2] = {h, w};
    return fftw_plan_many_dft(2, n, howmany, in, nullptr, 1, h * w, out, nullptr, 1, h * w, sign, FFTW_ESTIMATE);
  }
  static void exec(plan p, cplx* in, cplx* out) { fftw_execute_dft(p, in, out); }
  static void* alloc(std::size_t bytes) { return fftw_malloc(bytes); }
  static void release(void* p) { fftw_free(p); }
};

template <>
struct Fftw<float> {
  using plan = fftwf_plan;
  using cplx = fftwf_complex;
  static plan make(int howmany, int h, int w, cplx* in, cplx* out, int sign) {
    int n[2] = {h, w};
    return fftwf_plan_many_dft(2, n, howmany, in, nullptr, 1, h * w, out, nullptr, 1, h * w, sign, FFTW_ESTIMATE);
  }
  static void exec(plan p, cplx* in, cplx* out) { fftwf_execute_dft(p, in, out); }
  static void* alloc(std::size_t bytes) { return fftwf_malloc(bytes); }
  static void release(void* p) { fftwf_free(p); }
};

// SIMD-aligned buffer owned by FFTW's allocator.
template <class T>
class AlignedBuffer {
 public:
  AlignedBuffer() = default;
  AlignedBuffer(const AlignedBuffer&) = delete;
  AlignedBuffer& operator=(const AlignedBuffer&) = delete;
  ~AlignedBuffer() {
    if (data_) Fftw<T>::release(data_);
  }

  std::complex<T>* reserve(std::size_t n) {
    if (n > capacity_) {
      if (data_) Fftw<T>::release(data_);
      data_ = static_cast<std::complex<T>*>(Fftw<T>::alloc(n * sizeof(std::complex<T>)));
      if (!data_) throw std::bad_alloc();
      capacity_ = n;
    }
    return data_;
  }

 private:
  std::complex<T>* data_ = nullptr;
  std::size_t capacity_ = 0;
};

// Planning is not thread-safe in FFTW; execution with new arrays is. Plans are
// made for aligned arrays and only ever executed on aligned scratch.
template <class T>
class PlanCache {
 public:
  using Plan = typename Fftw<T>::plan;

  Plan get(std::size_t batch, std::size_t h, std::size_t w, bool inverse) {
    const auto key = std::make_tuple(batch, h, w, inverse);
    std::lock_guard lock(mutex_);
    if (auto it = plans_.find(key); it != plans_.end()) return it->second;
    AlignedBuffer<T> a, b;
    auto* in = reinterpret_cast<typename Fftw<T>::cplx*>(a.reserve(batch * h * w));
    auto* out = reinterpret_cast<typename Fftw<T>::cplx*>(b.reserve(batch * h * w));
    Plan p = Fftw<T>::make(static_cast<int>(batch), static_cast<int>(h), static_cast<int>(w), in,
                           out, inverse ? FFTW_BACKWARD : FFTW_FORWARD);
    if (!p) throw std::runtime_error("fft: FFTW planning failed");
    plans_.emplace(key, p);
    return p;
  }

 private:
  std::mutex mutex_;
  std::map<std::tuple<std::size_t, std::size_t, std::size_t, bool>, Plan> plans_;
};

template <class T>
PlanCache<T>& plan_cache() {
  static PlanCache<T> cache;
  return cache;
}

}  // namespace detail

/// out[b] = sum_x in[b][x] * exp(∓2πi k·x/N) for each of `batch` h×w planes.
/// `in` and `out` must not alias.
template <class T>
void transform2d(std::span<const std::complex<T>> in, std::span<std::complex<T>> out,
                 std::size_t batch, std::size_t h, std::size_t w, bool inverse) {
  if (in.size() != batch * h * w || out.size() != in.size()) {
    throw std::invalid_argument("fft::transform2d: buffer size mismatch");
  }
  if (in.empty()) return;
  auto plan = detail::plan_cache<T>().get(batch, h, w, inverse);
  thread_local detail::AlignedBuffer<T> scratch_in, scratch_out;
  auto* a = scratch_in.reserve(in.size());
  auto* b = scratch_out.reserve(in.size());
  std::copy(in.begin(), in.end(), a);
  using C = typename detail::Fftw<T>::cplx;
  detail::Fftw<T>::exec(plan, reinterpret_cast<C*>(a), reinterpret_cast<C*>(b));
  std::copy(b, b + in.size(), out.begin());
}

template <class T>
std::vector<std::complex<T>> forward2d(std::span<const std::complex<T>> in, std::size_t batch,
                                       std::size_t h, std::size_t w) {
  std::vector<std::complex<T>> out(in.size());
  transform2d<T>(in, out, batch, h, w, false);
  return out;
}

/// Unnormalized inverse; divide by h*w for the true inverse.
template <class T>
std::vector<std::complex<T>> backward2d(std::span<const std::complex<T>> in, std::size_t batch,
                                        std::size_t h, std::size_t w) {
  std::vector<std::complex<T>> out(in.size());
  transform2d<T>(in, out, batch, h, w, true);
  return out;
}

}  // namespace pderoll::fft
