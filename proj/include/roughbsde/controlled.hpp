#pragma once

#include <cstddef>
#include <memory>

#include "roughbsde/field.hpp"
#include "roughbsde/models.hpp"
#include "roughbsde/rough_path.hpp"

namespace roughbsde {

// Pair (Y, Y') controlled by the drive: the remainder δY - Y'δX is small in the
// two-exponent variation scale. Y has nv components; Yp stores the derivative with
// the drive direction innermost, Yp[c*e + l].
struct StochasticControlledPath {
  EnsField Y;
  EnsField Yp;
  int nv = 1;
  int e = 1;
  double q = 2.0;   // variation exponent of the martingale part
  double qp = 2.0;  // variation exponent of the derivative
  double m = 2.0;   // integrability exponent
  std::shared_ptr<const RoughDrive> drive;
};

struct ControlledNormReport {
  double K = 1.0;
  double mart_qvar = 0.0;   // q-variation of the martingale-part increments
  double yp_qpvar = 0.0;    // q'-variation of the derivative increments
  double remJ_var = 0.0;    // qq'/(q+q')-variation of the drift-part remainder
  double terminal = 0.0;    // L^m norms of Y and Y' at the window end
  double total = 0.0;       // terminal + K·mart_qvar + yp_qpvar + K·remJ_var
  std::size_t points_used = 0;
};

// K-weighted norm over the index window [i0, i1]; pair norms are evaluated on a
// coarsened breakpoint set of at most cap points (0 = exact). Preconditions:
// K >= 1, q, q' >= drive p, 1/q + 1/q' > 1/2.
ControlledNormReport controlled_norm(const StochasticControlledPath& scp, const Model& model, double K,
                                     std::size_t i0, std::size_t i1, std::size_t cap = 64);
ControlledNormReport controlled_norm(const StochasticControlledPath& scp, const Model& model, double K);

// Same structure on differences; each remainder is taken against its own drive.
ControlledNormReport controlled_distance(const StochasticControlledPath& a, const StochasticControlledPath& b,
                                         const Model& model, double K, std::size_t i0, std::size_t i1,
                                         std::size_t cap = 64);
ControlledNormReport controlled_distance(const StochasticControlledPath& a, const StochasticControlledPath& b,
                                         const Model& model, double K);

// Essentially bounded controlled coefficient G: R^{n} -> R^{n x e} as a tensor
// G[(i*e + j)*n + k] with derivative Gp[((i*e + j)*n + k)*e + l]. Deterministic
// coefficients use a single broadcast sample.
struct EssBoundedControlledPath {
  EnsField G;
  EnsField Gp;
  int n = 1;
  int e = 1;
  double p = 2.0;
  std::shared_ptr<const RoughDrive> drive;
};

struct EssNormReport {
  double terminal_G = 0.0;
  double terminal_Gp = 0.0;
  double gp_pvar = 0.0;     // p-variation of sup-norm derivative increments
  double rem_p2var = 0.0;   // p/2-variation of the sup-norm remainder
  double total = 0.0;
};

EssNormReport ess_norm(const EssBoundedControlledPath& g, std::size_t i0, std::size_t i1, std::size_t cap = 64);
EssNormReport ess_norm(const EssBoundedControlledPath& g);
double ess_distance(const EssBoundedControlledPath& a, const EssBoundedControlledPath& b, std::size_t i0,
                    std::size_t i1, std::size_t cap = 64);

// Product (GY, GY' + G'Y) together with its martingale part, the left-point
// integral of G against the martingale increments of Y.
struct LeibnizProduct {
  StochasticControlledPath scp;
  EnsField mart_integral;
};
LeibnizProduct leibniz_product(const EssBoundedControlledPath& g, const StochasticControlledPath& scp,
                               const Model& model);

struct BoundAudit {
  double lhs = 0.0;
  double rhs = 0.0;
  double ratio = 0.0;  // measured constant lhs/rhs
};
// Measured product-norm estimate: product K-norm against
// ess_norm(G)·(K·‖Y_T‖_2 + ‖(Y,Y')‖^{(K)}·(1 + K·|X|_{p-var})²).
BoundAudit leibniz_bound_audit(const EssBoundedControlledPath& g, const StochasticControlledPath& scp,
                               const LeibnizProduct& prod, const Model& model, double K);

// Time-integral lift (∫F dr, 0); audits the square-root modulus bound, which is an
// exact discrete Cauchy-Schwarz inequality, and reports the worst observed ratio.
struct DriftLift {
  StochasticControlledPath scp;
  double bound_max_ratio = 0.0;
};
DriftLift lift_drift_integral(const EnsField& F, const Model& model, std::shared_ptr<const RoughDrive> drive,
                              double p, double m);

}  // namespace roughbsde
