#include "qcd/trial_runner.hpp"

#include <stdexcept>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace qcd {

int available_workers() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void for_each_index_parallel(long n, int workers, const std::function<void(long)>& fn) {
  if (n < 0) throw std::invalid_argument("for_each_index_parallel: negative count");
#ifdef _OPENMP
  const int threads = workers > 0 ? workers : omp_get_max_threads();
#pragma omp parallel for schedule(dynamic) num_threads(threads)
  for (long i = 0; i < n; ++i) fn(i);
#else
  (void)workers;
  for (long i = 0; i < n; ++i) fn(i);
#endif
}

void for_each_index_serial(long n, const std::function<void(long)>& fn) {
  if (n < 0) throw std::invalid_argument("for_each_index_serial: negative count");
  for (long i = 0; i < n; ++i) fn(i);
}

}  // namespace qcd
