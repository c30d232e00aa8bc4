#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "flowrecon/adam.hpp"
#include "flowrecon/flow.hpp"
#include "flowrecon/imaging.hpp"
#include "flowrecon/sparsity.hpp"

namespace flowrecon {

struct ReconConfig {
  std::size_t k = 0;               // kept latent coordinates; 0 selects n / 4
  double mu = 0.0;                 // TV weight
  double lambda = 0.0;             // Laplace prior weight
  double learning_rate = 1e-2;
  std::size_t max_iterations = 2000;
  double tolerance = 1e-8;         // relative change of the loss over `window` iterations
  std::size_t window = 25;
  double tv_epsilon = 1e-6;
  std::uint64_t seed = 0;
  // Documentation only: the latent l1 radius and TV radius are imposed
  // through lambda and mu, never as explicit constraint sets.
  double latent_radius = 0.0;
  double tv_radius = 0.0;

  std::size_t resolved_k(std::size_t n) const { return k == 0 ? n / 4 : k; }
  void validate(std::size_t n) const;
};

/// Keeps the last k canonical latent coordinates and zeros the rest.
LatentVector project(const LatentVector& z, std::size_t k);

struct LossTerms {
  double data = 0.0;   // (1/n) ||g - H G(z)||^2
  double tv = 0.0;     // exact TV of G(z)
  double total = 0.0;  // data + mu * tv
};

LossTerms loss_terms(const MultiscaleFlow& flow, const MriOperator& op, const ComplexTensor& g,
                     const LatentVector& z, double mu);
double loss_total(const MultiscaleFlow& flow, const MriOperator& op, const ComplexTensor& g,
                  const LatentVector& z, double mu);

struct ObjectiveGrad {
  double value = 0.0;  // ||g - H G(z)||^2 + lambda (sum|z| + n ln 2) + mu TV_eps(G(z))
  LatentVector grad;
  Tensor image;
};

/// Smoothed reconstruction objective and its gradient in z.
ObjectiveGrad objective_and_grad(const MultiscaleFlow& flow, const MriOperator& op, const ComplexTensor& g,
                                 const LatentVector& z, double mu, double lambda, double tv_epsilon);

struct ReconResult {
  Tensor image;                   // G(latent), recomputed at the end
  LatentVector latent;
  std::vector<LossTerms> trace;   // trace[0] at the initial point
  bool converged = false;
  std::size_t iterations = 0;
  std::vector<std::string> warnings;
};

/// Called with (iteration, iterate) after every projected update; lets tests
/// and tools inspect iterates without storing them all.
using IterateObserver = std::function<void(std::size_t, const LatentVector&)>;

/// Adam on the smoothed objective from z = 0, projecting every iterate onto
/// the last-k subspace.
ReconResult inn_proj_tv(const MultiscaleFlow& flow, const MriOperator& op, const ComplexTensor& g,
                        const ReconConfig& config, const IterateObserver& observer = {});

/// Same objective without the subspace constraint, warm-started at `init`,
/// for a fixed number of iterations. Returns the iterate with the smallest
/// data term (the start included), so fidelity never gets worse.
ReconResult debias(const MultiscaleFlow& flow, const MriOperator& op, const ComplexTensor& g,
                   const ReconResult& init, const ReconConfig& config, std::size_t iterations);

/// Kept fractions reachable by zeroing whole latent sections, largest first.
std::vector<double> valid_fractions(const std::vector<std::size_t>& section_sizes);

struct TruncationRow {
  double fraction = 1.0;
  double mean_rmse = 0.0;
  double mean_ssim = 0.0;
};

/// For each image: invert, zero finest sections until `fraction` of the
/// coordinates remain, regenerate and score against the original.
std::vector<TruncationRow> truncation_study(const MultiscaleFlow& flow, const std::vector<Tensor>& images,
                                            const std::vector<double>& fractions);
/// Same schema with the Haar pyramid in place of the flow latent.
std::vector<TruncationRow> haar_truncation_study(const std::vector<Tensor>& images, std::size_t levels,
                                                 const std::vector<double>& fractions);

}  // namespace flowrecon
