// Fits the empirical potential on a 1-D KL instance with a known ground
// truth and prints the parameter error and transport estimate.

#include <iostream>

#include "uot/uot.hpp"

int main() {
  using namespace uot;

  const PotentialClass cls(PotentialKind::quad_shift, 1, 1.0, -10.0, {10.0, 4.0, 2.0}, 3.0);
  const Potential z0 = cls.make({0.3, 0.1});
  const Entropy entropy(EntropyKind::kl, 1.0);

  DensitySpec spec;
  spec.kind = DensityKind::uniform_ball;
  spec.dim = 1;
  spec.radius = 1.0;

  const DiscreteMeasure mu = sample(spec, 512, Seed{42});
  const DiscreteMeasure nu = make_consistent_instance(mu, z0, entropy);

  const DiscreteMeasure mu_hat = sample_atoms(mu, 4096, Seed{1});
  const DiscreteMeasure nu_hat = sample_atoms(nu, 4096, Seed{2});

  FitConfig cfg;
  cfg.restarts = 1;
  const FitResult fr = fit(mu_hat, nu_hat, cls, entropy, cfg);

  std::cout << "true theta      : " << z0.theta()[0] << " " << z0.theta()[1] << "\n";
  std::cout << "fitted theta    : " << fr.z.theta()[0] << " " << fr.z.theta()[1] << "\n";
  std::cout << "uot estimate    : " << uot_estimate(fr) << "\n";
  std::cout << "gradient norm   : " << fr.grad_norm << "\n";

  const SemiDualProblem pop(mu, nu, entropy, cls.R());
  const double d = h_circ_distance(pop, fr.z, z0, cls.lambda(),
                                   class_cprime(cls, entropy, cls.R()));
  std::cout << "d_H(zhat, z0)   : " << d << "\n";
  return 0;
}
