#pragma once

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <vector>

#include "asymscat/ray_transform.hpp"
#include "asymscat/sphere_fields.hpp"

namespace asymscat {

enum class BasisParity { All, Even, Odd };

/// Finite basis of bandlimited boundary fields. Tensor bases hold tangential
/// projections of p(x) e_i (.) e_j, scalar bases the monomials p; p runs over
/// canonical monomials of degree <= degree, dependent candidates dropped.
struct TensorBasis {
  SphereSpec spec;
  Rank rank = Rank::Sym2;
  int degree = 0;
  BasisParity parity_mode = BasisParity::All;
  std::vector<BoundaryField> fields;  // unit norm in the sampled inner product
  std::vector<int> parity;            // 0 even, 1 odd
  std::vector<Eigen::VectorXd> points;
  Eigen::MatrixXd sampled;  // stacked point values of each element, one column per element
  Eigen::MatrixXd gram;
  double gram_min_eigenvalue = 0.0;

  int size() const { return static_cast<int>(fields.size()); }
  BoundaryField combine(const Eigen::VectorXd& coeffs) const;
  /// Least-squares coordinates of f in the sampled inner product; residual is
  /// the relative sampled norm of what is left over.
  Eigen::VectorXd coordinates(const BoundaryField& f, double* residual = nullptr) const;
  /// Upper factor R of the Gram matrix: |R c| is the sampled norm of combine(c).
  Eigen::MatrixXd whitening() const;
};

TensorBasis tensor_basis(const SphereSpec& spec, int degree, BasisParity parity = BasisParity::All);
TensorBasis scalar_basis(const SphereSpec& spec, int degree, BasisParity parity = BasisParity::All);

/// Rows per geodesic: one half-period row per weight, then one full-period row per moment.
struct RowPlan {
  std::vector<int> weights;
  std::vector<Poly> moments;
};

/// All ambient monomials of degree <= deg (as canonical polynomials).
std::vector<Poly> moment_polys(const SphereSpec& spec, int deg);

struct RowMeta {
  int geodesic = 0;
  int m = 0;        // weight exponent (weighted rows)
  int moment = -1;  // index into the moment list, -1 for weighted rows
  double lambda = 1.0;
};

struct ForwardOperator {
  Eigen::MatrixXd A;
  std::vector<RowMeta> rows;

  /// Singular values, descending; computed once.
  const Eigen::VectorXd& singular_values() const;

 private:
  mutable std::optional<Eigen::VectorXd> sv_;
};

/// Tensor rows carry the |lambda|^2 symbol factor, scalar rows do not.
ForwardOperator build_forward(const TensorBasis& basis, const std::vector<GreatCircle>& geodesics,
                              const RowPlan& plan, const QuadratureOptions& q = {});
ForwardOperator build_forward(const TensorBasis& basis, const std::vector<GreatCircle>& geodesics, int m,
                              const std::vector<Poly>& moments = {}, const QuadratureOptions& q = {});
/// Rows in the order of an explicit list (sample ingestion).
ForwardOperator build_forward(const TensorBasis& basis, const std::vector<GreatCircle>& geodesics,
                              const std::vector<RowMeta>& rows, const std::vector<Poly>& moments,
                              const QuadratureOptions& q = {});
/// Reference assembly: one direct quadrature per entry, single thread.
ForwardOperator build_forward_serial(const TensorBasis& basis, const std::vector<GreatCircle>& geodesics,
                                     const std::vector<RowMeta>& rows, const std::vector<Poly>& moments,
                                     const QuadratureOptions& q = {});
std::vector<RowMeta> expand_plan(const RowPlan& plan, int geodesic_count);

/// Forward samples of a field (sym2 or scalar) on the plan, values scaled as in build_forward.
RaySampleSet simulate_samples(const BoundaryField& f, const std::vector<GreatCircle>& geodesics,
                              const RowPlan& plan, double lambda = 1.0, const QuadratureOptions& q = {});

// ---- kernel diagnostics ------------------------------------------------------

/// Whitened orthonormal basis of the Lie-derivative fields L_X g_eps lying in
/// the span of an even or full tensor basis.
Eigen::MatrixXd lie_subspace(const TensorBasis& basis, double tol = 1e-9);

struct KernelVector {
  Eigen::VectorXd coeffs;
  double sigma = 0.0;
  double odd_fraction = 0.0;      // field-norm share of odd basis elements
  double lie_distance = 0.0;      // distance to the Lie-derivative subspace (unit vector)
  double odd_lie_distance = 0.0;  // distance to odd (+) Lie
};

struct NullspaceReport {
  Eigen::VectorXd singular_values;
  double threshold = 0.0;
  double sigma_ratio = 0.0;  // sigma_min / sigma_max
  int rank = 0;
  std::vector<KernelVector> kernel;
  int odd_dimension = 0, lie_dimension = 0, odd_lie_dimension = 0;
  /// sin of the largest principal angle between the kernel and odd (+) Lie, both ways.
  double kernel_to_odd_lie = 0.0, odd_lie_to_kernel = 0.0;
};

NullspaceReport nullspace_analysis(const ForwardOperator& A, const TensorBasis& basis, double rel_threshold = 1e-8);

// ---- reconstruction ----------------------------------------------------------

struct ReconstructionDiagnostics {
  double residual = 0.0;           // |A c - b|
  double relative_residual = 0.0;  // |A c - b| / |b|
  double sigma_max = 0.0, sigma_min = 0.0, cutoff = 0.0;
  int rank = 0, nullity = 0, rows = 0;
  bool inconsistent = false;
  std::string warning;
  Eigen::VectorXd coeffs;
  /// Unit coefficient vectors dropped by the truncation.
  std::vector<Eigen::VectorXd> kernel;
};

struct Reconstruction {
  BoundaryField field;
  ReconstructionDiagnostics diag;
};

/// Minimum-norm truncated-SVD solve (cutoff rel_cut * sigma_max).
Reconstruction solve_truncated(const ForwardOperator& A, const Eigen::VectorXd& b, const TensorBasis& basis,
                               double rel_cut = 1e-10, double consistency_tol = 1e-8);
Reconstruction reconstruct_tensor(const RaySampleSet& samples, const TensorBasis& basis,
                                  const std::vector<Poly>& moments = {}, const QuadratureOptions& q = {});
Reconstruction reconstruct_scalar(const RaySampleSet& samples, const TensorBasis& basis,
                                  const std::vector<Poly>& moments = {}, const QuadratureOptions& q = {});

// ---- dense orbits and the pole system ----------------------------------------

struct OrbitResidues {
  double period = 0.0;
  std::vector<double> residues;  // sorted, in [0, period)
  double fill_distance = 0.0;    // largest circular gap
};

/// {t0 + k pi mod 2 pi rho : |k| <= K}, duplicates merged at 1e-9 * period.
OrbitResidues dense_orbit_residues(double t0, double rho, int K);

/// Smallest singular value of the Fourier matrix of degree L (in t / rho) on
/// the residues; positive means a degree-L integrand vanishing there vanishes.
double orbit_interpolation_sigma(const OrbitResidues& r, double rho, int L);

struct PoleSystemResidual {
  double relation = 0.0;  // Hess p : F - (tr Hess p) tr F - c* p tr F at the pole
  double direct = 0.0;    // michel_residual(p F, c*) evaluated at the pole
  double printed = 0.0;   // the displayed constants taken literally
};

/// Pole = rho e_n. p must vanish to second order there.
PoleSystemResidual pole_system_residual(const BoundaryField& F, const Poly& p);
/// Rank of the pole relations over all degree-2 monomials in the graph
/// coordinates, acting on the tangential values F(n_p).
int pole_system_rank(const SphereSpec& spec);

}  // namespace asymscat
