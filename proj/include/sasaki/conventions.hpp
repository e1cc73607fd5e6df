#pragma once

// Convention ledger emitted with every run: component conventions and the
// normalization constants pinned by the test suite.

#include <nlohmann/json.hpp>

namespace sasaki {

inline constexpr const char* kToolVersion = "1.0.0";
inline constexpr int kSchemaVersion = 1;

inline nlohmann::json convention_ledger() {
  return {
      {"schema_version", kSchemaVersion},
      {"grid",
       {{"layout", "row-major-real-axes: axis 2i = x_i, axis 2i+1 = y_i, axis 0 slowest"},
        {"wirtinger", "d_i = (d_{x_i} - sqrt(-1) d_{y_i}) / 2, complex index 0-based"},
        {"second_derivatives", "composition of first-derivative stencils D_b D_a"},
        {"integration", "L_xi * cell volume * exact sum over grid points"}}},
      {"metric",
       {{"omega", "omega = g_{i jbar}, d eta = 2 omega"},
        {"d_eta_components", "(d eta)_{i jbar} = 2 g_{i jbar}"},
        {"volume_density", "(d eta)^n ^ eta = det(2 g) dV L_xi"},
        {"inverse_index", "g^{i jbar} = (G^{-1})_{j i}"}}},
      {"laplacian", {{"basic_laplacian", "Delta_B u = 2 g^{i jbar} u_{i jbar}"}, {"constant", 2.0}}},
      {"gradient", {{"norm", "|grad f|^2 = 2 g^{i jbar} d_i f d_jbar f"}, {"constant", 2.0}}},
      {"curvature",
       {{"tensor", "R_{i jbar k lbar} = -d_i d_jbar g_{k lbar} + g^{p qbar} d_i g_{k qbar} d_jbar g_{p lbar}"},
        {"ricci", "R_{i jbar} = g^{k lbar} R_{i jbar k lbar} = -d_i d_jbar log det g"},
        {"scalar", "S = g^{i jbar} R_{i jbar}"},
        {"hsc", "K(U) = R(U, Ubar, U, Ubar) / g(U, Ubar)^2; real-convention H = 4 K"},
        {"fubini_study_K", 2.0},
        {"poincare_K", -2.0},
        {"shift_tensor_K", "-c (h h + h h) has K = -2 c"}}},
      {"royden",
       {{"inequality", "sigma^{i jbar} sigma^{k lbar} R_{i jbar k lbar} <= -(n+1)/(2n) kappa (tr_sigma h)^2"},
        {"trace_convention", "metric: h components; contact convention (2h, 2R, kappa/2) doubles the margin"},
        {"derate", 0.95}}},
      {"monge_ampere",
       {{"equation", "log det(chi + u_{i jbar}) - log det(2 g) - u = 0"},
        {"background", "chi(t) = 2 t g - rho"},
        {"linearization", "sigma^{i jbar} d_i d_jbar h - h"},
        {"flat_solution", "u_t = n log t"}}},
      {"estimates",
       {{"trace_bound", "tr_sigma d eta <= 2n / ((n+1) kappa), kappa bounding the HSC of d eta from above by -kappa"},
        {"kappa_scaling", "K(d eta) = K(g) / 2"},
        {"key_inequality", "sigma^{k lbar} d_k d_lbar log tr_sigma d eta >= -1 + (n+1)/(2n) kappa tr_sigma d eta"},
        {"max_principle", "exp(sup u) <= sup det chi / det(2 g)"}}},
      {"chern",
       {{"c1", "c1 = rho / (2 pi)"},
        {"c1_integral", "int c1 ^ omega^{n-1} / (n-1)! ^ eta = int tr_g(c1) det g dV L_xi"},
        {"my_prefactor", "(2 pi)^2 kept explicit"},
        {"my_density",
         "(2 pi)^2 (2 c2 - n/(n+1) c1^2) ^ sigma^{n-2}/(n-2)! ^ eta = "
         "[|R|^2 - S^2 - (n+2)/(n+1)(|rho|^2 - S^2)] sigma^n / n! ^ eta, norms in sigma"},
        {"sigma_volume", "sigma^n / n! ^ eta = det(sigma) / n! dV L_xi"}}},
  };
}

}  // namespace sasaki
