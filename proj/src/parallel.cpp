#include "tdbem/parallel.hpp"

#include <cstdlib>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace tdbem {

namespace {

int initial_thread_count() {
  if (const char* env = std::getenv("TDBEM_THREADS")) {
    try {
      int n = std::stoi(env);
      if (n > 0) return n;
    } catch (const std::exception&) {
    }
  }
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

int& current() {
  static int n = initial_thread_count();
  return n;
}

}  // namespace

int thread_count() { return current(); }

void set_thread_count(int n) { current() = n > 0 ? n : 1; }

}  // namespace tdbem
