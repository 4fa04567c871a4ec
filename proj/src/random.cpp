#include "alphalaw/random.hpp"

#include <algorithm>
#include <numeric>

#include "alphalaw/errors.hpp"

namespace alphalaw {

std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream,
                          std::uint64_t index) noexcept {
  return mix64(mix64(mix64(base) ^ stream) ^ index);
}

std::uint64_t fnv1a64(std::string_view text) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::vector<double> sample_dirichlet(Rng& rng, std::size_t k,
                                     double concentration) {
  if (!(concentration > 0.0)) {
    throw InvalidParameter("Dirichlet concentration must be positive");
  }
  std::gamma_distribution<double> gamma(concentration, 1.0);
  std::vector<double> w(k);
  double total = 0.0;
  // Tiny shapes can underflow every draw to zero; redraw in that case.
  do {
    total = 0.0;
    for (double& v : w) {
      v = gamma(rng);
      total += v;
    }
  } while (!(total > 0.0));
  for (double& v : w) v /= total;
  return w;
}

std::size_t uniform_index(Rng& rng, std::size_t n) {
  if (n == 0) throw InvalidParameter("uniform_index needs n >= 1");
  const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  return std::min(static_cast<std::size_t>(u * static_cast<double>(n)), n - 1);
}

void shuffle_indices(Rng& rng, std::vector<std::size_t>& items) {
  for (std::size_t i = items.size(); i > 1; --i) {
    std::swap(items[i - 1], items[uniform_index(rng, i)]);
  }
}

}  // namespace alphalaw
