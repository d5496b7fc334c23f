// Command-line front end.  Subcommand tree:
//   ot        assign | solve | metric
//   match     gs | pq | partition
//   partition solve | values | dynamics
//   multi     feasible | dominate | solve | region
//   interp    solve | improve | loop | gap | mccann | hedonic
//   game      surplus | profit | core | nash | free
//   validate
//
// Results go to stdout (or --out) as JSON; --format csv switches commands
// with a natural series to their documented CSV schema.  Exit codes:
//   0  success
//   2  semantic negative (infeasible capacity, empty core, unstable
//      matching, non-dominance, escalating dynamics, failed Nash audit)
//   1  schema violations, solver failures, bad arguments

#include <cstdint>
#include <cstdio>
#include <functional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "partrans/games.hpp"
#include "partrans/interpolated.hpp"
#include "partrans/io.hpp"
#include "partrans/matching.hpp"
#include "partrans/multipartition.hpp"
#include "partrans/partition.hpp"
#include "partrans/transport.hpp"

namespace {

using namespace partrans;

struct Ctx {
  std::string out;
  std::string format = "json";
  std::uint64_t seed = 1;  // reserved for randomized subcommands; fixed default
  double tol = 1e-9;
};

int emit_json(const Ctx& ctx, const json& j) {
  emit(ctx.out, j.dump(2) + "\n");
  return 0;
}

int emit_csv(const Ctx& ctx, const std::string& body) {
  emit(ctx.out, body);
  return 0;
}

// ---- input helpers --------------------------------------------------------

json load_json(const std::string& path) {
  return json::parse(read_file(path));
}

// matrix file: a bare array-of-arrays, or an object holding `key` (with
// "theta" accepted as a generic fallback so one file can serve several roles)
Mat load_matrix(const std::string& path, const std::string& key) {
  json j = load_json(path);
  if (j.is_object()) {
    if (j.contains(key)) return json_to_mat(j.at(key));
    require(j.contains("theta"), path + ": missing \"" + key + "\"");
    return json_to_mat(j.at("theta"));
  }
  require(j.is_array(), path + ": expected a matrix");
  return json_to_mat(j);
}

Vec load_vector(const std::string& path, const std::string& key) {
  json j = load_json(path);
  if (j.is_object()) {
    require(j.contains(key), path + ": missing \"" + key + "\"");
    return j.at(key).get<Vec>();
  }
  require(j.is_array(), path + ": expected an array");
  return j.get<Vec>();
}

// site list: {"sites": [[...]]}, a measure file (points are used), or a
// bare array of points
Mat load_sites(const std::string& path) {
  json j = load_json(path);
  if (j.is_object() && j.contains("sites")) return json_to_mat(j.at("sites"));
  if (j.is_object() && j.contains("points"))
    return measure_from_json(j).points;
  require(j.is_array(), path + ": expected site coordinates");
  return json_to_mat(j);
}

Vec parse_list(const std::string& s) {
  Vec out;
  std::string tok;
  std::istringstream in(s);
  while (std::getline(in, tok, ',')) {
    if (tok.empty()) continue;
    out.push_back(std::stod(tok));
  }
  require(!out.empty(), "empty numeric list: " + s);
  return out;
}

// cost spec grammar: quadratic | quadratic:r=R | power:r=R | tables:FILE
CostPair parse_cost(const std::string& s) {
  if (s.empty() || s == "quadratic") return CostPair::power(2.0);
  auto colon = s.find(':');
  std::string head = s.substr(0, colon);
  std::string rest = colon == std::string::npos ? "" : s.substr(colon + 1);
  if (head == "quadratic" || head == "power") {
    if (rest.empty()) return CostPair::power(2.0);
    require(rest.rfind("r=", 0) == 0, "cost spec: expected r=<value>");
    return CostPair::power(std::stod(rest.substr(2)));
  }
  if (head == "tables") {
    json j = load_json(rest);
    require(j.is_object() && j.contains("t1") && j.contains("t2"),
            rest + ": cost tables need \"t1\" and \"t2\"");
    return CostPair::tables(json_to_mat(j.at("t1")), json_to_mat(j.at("t2")));
  }
  throw PartransError("unknown cost spec: " + s);
}

// ---- result serializers ---------------------------------------------------

json sd_to_json(const SDResult& r) {
  json j;
  j["prices"] = r.prices;
  j["labeling"] = r.labeling.label;
  j["cell_masses"] = r.cell_masses;
  j["unassigned"] = r.unassigned;
  j["primal_value"] = r.primal_value;
  j["dual_value"] = r.dual_value;
  j["regime"] = regime_name(r.regime);
  j["mode"] = r.mode == CapacityMode::Exact ? "exact" : "atmost";
  j["mass_tol"] = r.mass_tol;
  j["iterations"] = r.iterations;
  j["converged"] = r.converged;
  return j;
}

std::string labeling_csv(const DiscreteMeasure& mu,
                         const std::vector<int>& label) {
  std::ostringstream out;
  out << "id,label\n";
  for (int k = 0; k < mu.size(); ++k)
    out << mu.ids[k] << ',' << label[k] << '\n';
  return out.str();
}

json game_to_json(const CoalitionGame& g) {
  json nu = json::object();
  for (unsigned mask = 1; mask <= g.grand(); ++mask)
    nu[std::to_string(mask)] = g.nu[mask];
  return json{{"n", g.n}, {"nu", std::move(nu)}};
}

CoalitionGame game_from_json(const json& j) {
  require(j.is_object() && j.contains("n") && j.contains("nu"),
          "game json needs \"n\" and \"nu\"");
  int n = j.at("n").get<int>();
  require(n >= 1 && n <= 20, "game json: n out of range");
  Vec nu(std::size_t{1} << n, 0.0);
  const json& v = j.at("nu");
  if (v.is_array()) {
    require(v.size() == nu.size(), "game json: nu array has wrong length");
    for (std::size_t k = 0; k < nu.size(); ++k) nu[k] = v.at(k).get<double>();
  } else {
    require(v.is_object(), "game json: nu must be an object or array");
    for (const auto& [key, val] : v.items()) {
      unsigned long mask = std::stoul(key);
      require(mask >= 1 && mask < nu.size(), "game json: coalition key " +
                                                 key + " out of range");
      nu[mask] = val.get<double>();
    }
  }
  return CoalitionGame(n, std::move(nu));
}

json deviation_to_json(const DeviationReport& r) {
  return json{{"improvement", r.improvement},
              {"agent", r.agent},
              {"deviation", r.deviation},
              {"profits", r.profits}};
}

// ---- subcommand bodies ----------------------------------------------------

int run_ot_assign(const Ctx& ctx, const std::string& theta_file, bool minimize) {
  Mat theta = load_matrix(theta_file, "theta");
  auto res = solve_assignment(theta, !minimize);
  json j{{"value", res.value},
         {"perm", res.perm},
         {"row_duals", res.row_duals},
         {"col_duals", res.col_duals},
         {"sense", minimize ? "min" : "max"}};
  return emit_json(ctx, j);
}

int run_ot_solve(const Ctx& ctx, const std::string& file,
                 const std::string& mu_file, const std::string& nu_file,
                 const std::string& theta_file, std::string sense) {
  DiscreteMeasure mu, nu;
  Mat theta;
  if (!file.empty()) {
    json j = load_json(file);
    require(j.contains("mu") && j.contains("nu") && j.contains("theta"),
            file + ": problem file needs mu/nu/theta");
    mu = measure_from_json(j.at("mu"));
    nu = measure_from_json(j.at("nu"));
    if (j.at("theta").is_string()) {
      std::string kind = j.at("theta").get<std::string>();
      theta = pairwise_distances(mu, nu);
      if (kind == "sqdist") {
        for (auto& row : theta)
          for (double& x : row) x *= x;
      } else {
        require(kind == "dist", file + ": unknown cost kind " + kind);
      }
    } else {
      theta = json_to_mat(j.at("theta"));
    }
    if (sense.empty() && j.contains("sense"))
      sense = j.at("sense").get<std::string>();
  } else {
    require(!mu_file.empty() && !nu_file.empty() && !theta_file.empty(),
            "ot solve needs --file or --mu/--nu/--theta");
    mu = load_measure(mu_file);
    nu = load_measure(nu_file);
    theta = load_matrix(theta_file, "theta");
  }
  if (sense.empty()) sense = "min";
  require(sense == "min" || sense == "max", "sense must be min or max");
  auto res = solve_transport(mu.weights, nu.weights, theta, sense == "max");
  if (ctx.format == "csv") return emit_csv(ctx, plan_to_csv(res.plan));
  json j{{"value", res.value},
         {"sense", sense},
         {"plan", plan_to_json(res.plan)},
         {"row_duals", res.row_duals},
         {"col_duals", res.col_duals},
         {"iterations", res.iterations}};
  return emit_json(ctx, j);
}

int run_ot_metric(const Ctx& ctx, const std::string& mu_file,
                  const std::string& nu_file) {
  auto mu = load_measure(mu_file);
  auto nu = load_measure(nu_file);
  auto res = metric_distance(mu, nu);
  if (ctx.format == "csv") return emit_csv(ctx, plan_to_csv(res.plan));
  json j{{"distance", res.distance},
         {"balance", regime_name(res.balance)},
         {"plan", plan_to_json(res.plan)}};
  return emit_json(ctx, j);
}

int run_match_gs(const Ctx& ctx, const std::string& file) {
  json j = load_json(file);
  require(j.contains("men") && j.contains("women"),
          file + ": preference file needs \"men\" and \"women\"");
  auto to_prefs = [](const json& arr) {
    std::vector<std::vector<int>> p;
    for (const auto& row : arr) p.push_back(row.get<std::vector<int>>());
    return p;
  };
  auto men = to_prefs(j.at("men"));
  auto women = to_prefs(j.at("women"));
  auto res = deferred_acceptance(men, women);
  auto blocks = blocking_pairs(men, women, res.match_row);
  if (ctx.format == "csv") {
    std::ostringstream out;
    out << "man,woman\n";
    for (std::size_t i = 0; i < res.match_row.size(); ++i)
      out << i << ',' << res.match_row[i] << '\n';
    return emit_csv(ctx, out.str());
  }
  json blocks_json = json::array();
  for (auto [a, b] : blocks) blocks_json.push_back({a, b});
  json out{{"match_row", res.match_row},
           {"match_col", res.match_col},
           {"proposals", res.proposals},
           {"rounds", res.rounds},
           {"blocking_pairs", std::move(blocks_json)}};
  return emit_json(ctx, out);
}

int run_match_pq(const Ctx& ctx, const std::string& file, double p, double q,
                 int kmax) {
  json j = load_json(file);
  require(j.contains("theta_m") && j.contains("theta_w") && j.contains("match"),
          file + ": needs theta_m/theta_w/match");
  Mat tm = json_to_mat(j.at("theta_m"));
  Mat tw = json_to_mat(j.at("theta_w"));
  auto assign = j.at("match").get<std::vector<int>>();
  auto rep = check_exchange_stability(tm, tw, assign, p, q, kmax, ctx.tol);
  json out{{"stable", rep.stable}, {"worst", rep.worst}, {"cycle", rep.cycle}};
  emit_json(ctx, out);
  return rep.stable ? 0 : 2;
}

int run_match_partition(const Ctx& ctx, const std::string& mu_file,
                        const std::string& phi_file,
                        const std::string& psi_file,
                        const std::string& quota_arg) {
  auto mu = load_measure(mu_file);
  Mat phi = load_matrix(phi_file, "phi");
  Mat psi = load_matrix(psi_file, "psi");
  Vec quota = parse_list(quota_arg);
  auto res = quota_deferred_acceptance(mu, phi, psi, quota);
  if (ctx.format == "csv") return emit_csv(ctx, labeling_csv(mu, res.labeling.label));
  json out{{"labeling", res.labeling.label},
           {"used_capacity", res.used_capacity},
           {"rounds", res.rounds}};
  return emit_json(ctx, out);
}

int run_partition_solve(const Ctx& ctx, const std::string& mu_file,
                        const std::string& theta_file,
                        const std::string& m_arg, const std::string& regime) {
  auto mu = load_measure(mu_file);
  Mat theta = load_matrix(theta_file, "theta");
  CapacitySpec cap;
  cap.m = parse_list(m_arg);
  if (regime == "atmost") {
    cap.mode = CapacityMode::AtMost;
  } else if (regime == "auto") {
    // relax to at-most when capacity outstrips demand, else book exactly
    cap.mode = cap.total() > mu.total_mass() * (1.0 + 1e-12)
                   ? CapacityMode::AtMost
                   : CapacityMode::Exact;
  } else {
    require(regime == "exact", "--regime must be auto, exact, or atmost");
  }
  auto res = solve_prices(mu, theta, cap);
  if (ctx.format == "csv") return emit_csv(ctx, labeling_csv(mu, res.labeling.label));
  emit_json(ctx, sd_to_json(res));
  return res.converged ? 0 : 1;
}

int run_partition_values(const Ctx& ctx, const std::string& mu_file,
                         const std::string& theta_file,
                         const std::string& base_file,
                         const std::string& lambda_arg,
                         const std::string& m_arg) {
  auto mu = load_measure(mu_file);
  Vec m = parse_list(m_arg);
  if (!lambda_arg.empty()) {
    // proportional family: closed-form slice values, no solve needed
    require(!base_file.empty(), "--lambda needs --base");
    Vec base = load_vector(base_file, "base");
    Vec lambda = parse_list(lambda_arg);
    auto v = scaled_family_values(mu, base, lambda, m);
    return emit_json(ctx, json{{"values", v}});
  }
  require(!theta_file.empty(), "partition values needs --theta or --lambda/--base");
  Mat theta = load_matrix(theta_file, "theta");
  CapacitySpec cap{parse_list(m_arg), CapacityMode::Exact};
  if (cap.total() > mu.total_mass() * (1.0 + 1e-12))
    cap.mode = CapacityMode::AtMost;
  auto res = solve_prices(mu, theta, cap);
  auto v = partition_values(mu, theta, res.labeling);
  json out{{"values", v}, {"prices", res.prices}, {"converged", res.converged}};
  emit_json(ctx, out);
  return res.converged ? 0 : 1;
}

int run_partition_dynamics(const Ctx& ctx, const std::string& mu_file,
                           const std::string& theta_file,
                           const std::string& m_arg, double dt, int steps,
                           double escalate_norm) {
  auto mu = load_measure(mu_file);
  Mat theta = load_matrix(theta_file, "theta");
  auto res = price_dynamics(mu, theta, parse_list(m_arg), dt, steps,
                            escalate_norm);
  if (ctx.format == "csv") return emit_csv(ctx, trajectory_to_csv(res.values));
  json out{{"values", res.values},
           {"escalating", res.escalating},
           {"direction", res.direction},
           {"steps_taken", res.steps_taken},
           {"final_prices", res.prices.empty() ? Vec{} : res.prices.back()}};
  emit_json(ctx, out);
  return res.escalating ? 2 : 0;
}

int run_multi_feasible(const Ctx& ctx, const std::string& mu_file,
                       const std::string& file, bool subpartition) {
  auto mu = load_measure(mu_file);
  json j = load_json(file);
  require(j.contains("zeta") && j.contains("M"),
          file + ": needs \"zeta\" and \"M\"");
  GoodsField zeta(json_to_mat(j.at("zeta")));
  Mat M = json_to_mat(j.at("M"));
  auto res = capacity_feasible(M, mu, zeta,
                               subpartition ? CoverMode::Subpartition
                                            : CoverMode::Partition);
  json out;
  out["feasible"] = res.feasible();
  out["verdict"] = res.verdict == FeasibilityCheck::Verdict::Feasible
                       ? "feasible"
                       : (res.verdict == FeasibilityCheck::Verdict::Boundary
                              ? "boundary"
                              : "infeasible");
  out["balanced"] = res.balanced;
  out["balance_gap"] = res.balance_gap;
  if (res.feasible()) out["weights"] = mat_to_json(res.weights);
  if (res.has_certificate) {
    out["certificate"] = mat_to_json(res.certificate);
    out["certificate_value"] = res.certificate_value;
  }
  emit_json(ctx, out);
  return res.feasible() ? 0 : 2;
}

int run_multi_dominate(const Ctx& ctx, const std::string& m1_file,
                       const std::string& m2_file) {
  Mat M1 = load_matrix(m1_file, "M");
  Mat M2 = load_matrix(m2_file, "M");
  auto res = capacity_dominates(M1, M2);
  json out{{"dominates", res.dominates},
           {"jensen_witness", res.jensen_witness},
           {"jensen_gap", res.jensen_gap}};
  if (res.dominates) out["split"] = mat_to_json(res.split);
  emit_json(ctx, out);
  return res.dominates ? 0 : 2;
}

int run_multi_solve(const Ctx& ctx, const std::string& mu_file,
                    const std::string& file, double escalate_norm) {
  auto mu = load_measure(mu_file);
  json j = load_json(file);
  require(j.contains("zeta") && j.contains("M") && j.contains("theta"),
          file + ": needs \"zeta\", \"M\", and \"theta\"");
  GoodsField zeta(json_to_mat(j.at("zeta")));
  auto res = solve_multipartition(mu, zeta, json_to_mat(j.at("theta")),
                                  json_to_mat(j.at("M")), escalate_norm);
  if (ctx.format == "csv") return emit_csv(ctx, labeling_csv(mu, res.labeling.label));
  json out{{"prices", mat_to_json(res.prices)},
           {"labeling", res.labeling.label},
           {"cell_moments", mat_to_json(res.cell_moments)},
           {"primal_value", res.primal_value},
           {"dual_value", res.dual_value},
           {"converged", res.converged},
           {"escalating", res.escalating},
           {"iterations", res.iterations}};
  emit_json(ctx, out);
  if (res.escalating) return 2;
  return res.converged ? 0 : 1;
}

int run_multi_region(const Ctx& ctx, const std::string& mu_file,
                     const std::string& share_file,
                     const std::string& thresholds_arg) {
  auto mu = load_measure(mu_file);
  Vec share = load_vector(share_file, "share");
  Vec thresholds;
  if (!thresholds_arg.empty()) {
    thresholds = parse_list(thresholds_arg);
  } else {
    // log-spaced sweep wide enough to reach both all-in endpoints
    for (double r = 1e-3; r < 2e3; r *= std::pow(10.0, 0.25))
      thresholds.push_back(r);
    thresholds.push_back(1e9);
  }
  auto rows = ratio_region(share, mu, thresholds);
  if (ctx.format == "json") {
    json arr = json::array();
    for (const auto& row : rows)
      arr.push_back({{"r", row[0]}, {"mJ", row[1]}, {"mP", row[2]}});
    return emit_json(ctx, json{{"region", std::move(arr)}});
  }
  return emit_csv(ctx, region_to_csv(rows));
}

int run_interp_solve(const Ctx& ctx, const std::string& mu_file,
                     const std::string& nu_file, const std::string& sites_file,
                     const std::string& cost_arg) {
  auto mu = load_measure(mu_file);
  auto nu = load_measure(nu_file);
  auto cost = parse_cost(cost_arg);
  Mat sites = sites_file.empty() ? Mat{} : load_sites(sites_file);
  auto res = solve_congruent(mu, nu, sites, cost);
  if (ctx.format == "csv") return emit_csv(ctx, plan_to_csv(res.plan));
  json out{{"prices", res.prices},
           {"site_of_mu", res.site_of_mu},
           {"site_of_nu", res.site_of_nu},
           {"mass_mu", res.mass_mu},
           {"mass_nu", res.mass_nu},
           {"value", res.value},
           {"mass_tol", res.mass_tol},
           {"converged", res.converged},
           {"iterations", res.iterations}};
  emit_json(ctx, out);
  return res.converged ? 0 : 1;
}

int run_interp_improve(const Ctx& ctx, const std::string& mu_file,
                       const std::string& nu_file,
                       const std::string& sites_file,
                       const std::string& cost_arg) {
  auto mu = load_measure(mu_file);
  auto nu = load_measure(nu_file);
  auto cost = parse_cost(cost_arg);
  Mat sites = load_sites(sites_file);
  auto cr = solve_congruent(mu, nu, sites, cost);
  Mat better = improve_sites(sites, cr.site_of_mu, cr.site_of_nu, mu, nu, cost);
  json out{{"sites", mat_to_json(better)}, {"value_before", cr.value}};
  return emit_json(ctx, out);
}

int run_interp_loop(const Ctx& ctx, const std::string& mu_file,
                    const std::string& nu_file, const std::string& sites_file,
                    const std::string& cost_arg, int iters) {
  auto mu = load_measure(mu_file);
  auto nu = load_measure(nu_file);
  auto res = lloyd_loop(mu, nu, load_sites(sites_file), parse_cost(cost_arg),
                        iters);
  if (ctx.format == "csv") return emit_csv(ctx, trajectory_to_csv(res.values));
  json out{{"values", res.values},
           {"final_sites", mat_to_json(res.site_history.back())},
           {"reached_tol", res.reached_tol},
           {"solves", res.solves}};
  return emit_json(ctx, out);
}

int run_interp_gap(const Ctx& ctx, const std::string& mu_file,
                   const std::string& nu_file, const std::string& sites_file,
                   const std::string& cost_arg) {
  auto mu = load_measure(mu_file);
  auto nu = load_measure(nu_file);
  auto cost = parse_cost(cost_arg);
  require(cost.kind == CostPair::Kind::Power,
          "gap needs the power family (the exact ground cost is |x-y|^r)");
  Mat exact = pairwise_distances(mu, nu);
  for (auto& row : exact)
    for (double& d : row) d = std::pow(d, cost.r);
  double g = relay_gap(mu, nu, load_sites(sites_file), cost, exact);
  return emit_json(ctx, json{{"gap", g}});
}

int run_interp_mccann(const Ctx& ctx, const std::string& mu_file,
                      const std::string& nu_file, double s) {
  auto mu = load_measure(mu_file);
  auto nu = load_measure(nu_file);
  auto mid = mccann_interpolate(mu, nu, s);
  if (ctx.format == "csv") return emit_csv(ctx, measure_to_csv(mid));
  return emit_json(ctx, measure_to_json(mid));
}

int run_interp_hedonic(const Ctx& ctx, const std::string& mu_file,
                       const std::string& nu_file,
                       const std::string& sites_file,
                       const std::string& cost_arg) {
  auto mu = load_measure(mu_file);
  auto nu = load_measure(nu_file);
  auto cost = parse_cost(cost_arg);
  Mat sites = sites_file.empty() ? Mat{} : load_sites(sites_file);
  auto res = hedonic_equilibrium(mu, nu, sites, cost);
  json out{{"prices", res.prices},
           {"buyer_choice", res.buyer_choice},
           {"producer_choice", res.producer_choice},
           {"matched_mu", res.matched_mu},
           {"matched_nu", res.matched_nu},
           {"surplus", res.surplus},
           {"mass_tol", res.mass_tol},
           {"converged", res.converged}};
  emit_json(ctx, out);
  return res.converged ? 0 : 1;
}

int run_game_surplus(const Ctx& ctx, const std::string& mu_file,
                     const std::string& theta_file, const std::string& m_arg) {
  auto mu = load_measure(mu_file);
  auto g = surplus_game(mu, load_matrix(theta_file, "theta"),
                        parse_list(m_arg));
  return emit_json(ctx, game_to_json(g));
}

int run_game_profit(const Ctx& ctx, const std::string& mu_file,
                    const std::string& theta_file, const std::string& m_arg) {
  auto mu = load_measure(mu_file);
  auto pg = profit_game(mu, load_matrix(theta_file, "theta"),
                        parse_list(m_arg));
  json out = game_to_json(pg.game);
  json ns = json::array(), os = json::array();
  for (unsigned mask = 1; mask <= pg.game.grand(); ++mask) {
    if (pg.nonsmooth[mask]) ns.push_back(mask);
    if (pg.one_sided[mask]) os.push_back(mask);
  }
  out["nonsmooth"] = std::move(ns);
  out["one_sided"] = std::move(os);
  return emit_json(ctx, out);
}

int run_game_core(const Ctx& ctx, const std::string& file) {
  auto g = game_from_json(load_json(file));
  auto res = core_nonempty(g);
  json out;
  out["nonempty"] = res.nonempty;
  out["lp_value"] = res.lp_value;
  if (res.nonempty) {
    out["imputation"] = res.imputation;
  } else {
    json cert = json::array();
    for (auto [mask, w] : res.certificate)
      cert.push_back({{"coalition", mask}, {"weight", w}});
    out["certificate"] = std::move(cert);
  }
  emit_json(ctx, out);
  return res.nonempty ? 0 : 2;
}

int run_game_nash(const Ctx& ctx, const std::string& mu_file,
                  const std::string& theta_file, const std::string& p_arg,
                  const std::string& grid_arg, const std::string& cap_arg,
                  bool commission) {
  auto mu = load_measure(mu_file);
  Mat theta = load_matrix(theta_file, "theta");
  Vec p = parse_list(p_arg);
  Vec grid = parse_list(grid_arg);
  DeviationReport rep;
  if (commission) {
    rep = nash_check_commission(p, theta, mu, grid);
  } else {
    Vec cap = cap_arg.empty() ? Vec{} : parse_list(cap_arg);
    rep = nash_check_flat(p, theta, mu, grid, cap);
  }
  emit_json(ctx, deviation_to_json(rep));
  return rep.improvement > ctx.tol ? 2 : 0;
}

int run_game_free(const Ctx& ctx, const std::string& mu_file,
                  const std::string& theta_file) {
  auto mu = load_measure(mu_file);
  Mat theta = load_matrix(theta_file, "theta");
  auto res = free_price_equilibrium(theta, mu);
  if (ctx.format == "csv") {
    std::ostringstream out;
    out << "id,label,charge,residual\n";
    for (int k = 0; k < mu.size(); ++k) {
      double charge = res.labels[k] >= 0 ? res.w[res.labels[k]][k] : 0.0;
      out << mu.ids[k] << ',' << res.labels[k] << ',' << fmt(charge) << ','
          << fmt(res.residual[k]) << '\n';
    }
    return emit_csv(ctx, out.str());
  }
  json out{{"labels", res.labels},
           {"residual", res.residual},
           {"profits", res.profits},
           {"charges", mat_to_json(res.w)}};
  return emit_json(ctx, out);
}

// ---- validate -------------------------------------------------------------

void validate_measure(const json& j, json& diags) {
  if (!(j.contains("dim") && j.contains("points") && j.contains("weights"))) {
    diags.push_back({{"message", "measure needs dim/points/weights"}});
    return;
  }
  int dim = j.at("dim").get<int>();
  const auto& pts = j.at("points");
  const auto& w = j.at("weights");
  if (pts.size() != w.size())
    diags.push_back({{"message", "points and weights disagree on atom count"}});
  int k = 0;
  for (const auto& row : pts) {
    if (static_cast<int>(row.size()) != dim + 1)
      diags.push_back({{"message", "point row must be [id, x1..xd]"},
                       {"atom", k}});
    ++k;
  }
  k = 0;
  for (const auto& wk : w) {
    if (wk.get<double>() < 0.0)
      diags.push_back({{"message", "negative weight"}, {"atom", k}});
    ++k;
  }
}

int run_validate(const Ctx& ctx, const std::string& file) {
  json diags = json::array();
  std::string kind = "unknown";
  json j;
  bool parsed = true;
  try {
    j = load_json(file);
  } catch (const std::exception& e) {
    parsed = false;
    diags.push_back({{"message", std::string("unreadable: ") + e.what()}});
  }
  if (parsed && j.is_object()) {
    if (j.contains("points") && j.contains("weights")) {
      kind = "measure";
      validate_measure(j, diags);
    } else if (j.contains("men") && j.contains("women")) {
      kind = "marriage";
      std::size_t n_men = j.at("men").size(), n_women = j.at("women").size();
      int i = 0;
      for (const auto& row : j.at("men")) {
        if (row.size() != n_women)
          diags.push_back({{"message", "preference list length mismatch"},
                           {"row", i}});
        ++i;
      }
      i = 0;
      for (const auto& row : j.at("women")) {
        if (row.size() != n_men)
          diags.push_back({{"message", "preference list length mismatch"},
                           {"row", i}});
        ++i;
      }
    } else if (j.contains("n") && j.contains("nu")) {
      kind = "game";
      try {
        auto g = game_from_json(j);
        (void)g;
      } catch (const std::exception& e) {
        diags.push_back({{"message", e.what()}});
      }
    } else if (j.contains("zeta") && j.contains("M")) {
      kind = "multipartition";
      try {
        GoodsField zeta(json_to_mat(j.at("zeta")));
        Mat M = json_to_mat(j.at("M"));
        for (std::size_t i = 0; i < M.size(); ++i)
          if (M[i].size() != static_cast<std::size_t>(zeta.goods()))
            diags.push_back({{"message", "capacity row width != goods count"},
                             {"row", static_cast<int>(i)}});
      } catch (const std::exception& e) {
        diags.push_back({{"message", e.what()}});
      }
    } else if (j.contains("mu") && j.contains("nu")) {
      kind = "kantorovich";
      try {
        auto mu = measure_from_json(j.at("mu"));
        auto nu = measure_from_json(j.at("nu"));
        bool relaxed = j.contains("mode") &&
                       j.at("mode").get<std::string>() == "relaxed";
        double gap = mu.total_mass() - nu.total_mass();
        if (!relaxed && std::abs(gap) > 1e-9 * std::max(1.0, mu.total_mass()))
          diags.push_back({{"message", "marginals unbalanced in balanced mode"},
                           {"gap", gap}});
      } catch (const std::exception& e) {
        diags.push_back({{"message", e.what()}});
      }
    }
    if (j.contains("lambda")) {
      Vec lambda = j.at("lambda").get<Vec>();
      for (std::size_t i = 1; i < lambda.size(); ++i)
        if (lambda[i] <= lambda[i - 1]) {
          diags.push_back({{"message", "scalings not strictly increasing"},
                           {"index", static_cast<int>(i)}});
          break;
        }
    }
  }
  json out{{"kind", kind}, {"diagnostics", std::move(diags)}};
  return emit_json(ctx, out);
}

}  // namespace

int main(int argc, char** argv) {
  Ctx ctx;
  std::function<int()> action;

  CLI::App app{"partrans: transport, partition, and matching-market solvers"};
  app.require_subcommand(1);
  app.fallthrough();
  app.add_option("--out", ctx.out, "write the result to this file instead of stdout");
  app.add_option("--seed", ctx.seed, "seed for randomized components (default 1)");
  app.add_option("--tol", ctx.tol, "decision tolerance (default 1e-9)");
  app.add_option("--format", ctx.format, "output format: json or csv")
      ->check(CLI::IsMember({"json", "csv"}));

  // ---- ot -----------------------------------------------------------------
  auto* ot = app.add_subcommand("ot", "discrete transport problems");
  ot->require_subcommand(1);
  ot->fallthrough();
  {
    static std::string theta;
    static bool minimize = false;
    auto* c = ot->add_subcommand("assign", "square assignment by LP");
    c->fallthrough();
    c->add_option("--theta", theta, "payoff matrix file")->required();
    c->add_flag("--minimize", minimize, "treat the matrix as a cost");
    c->callback([&] { action = [&] { return run_ot_assign(ctx, theta, minimize); }; });
  }
  {
    static std::string file, mu, nu, theta, sense;
    auto* c = ot->add_subcommand("solve", "optimal coupling of two measures");
    c->fallthrough();
    c->add_option("--file", file, "problem file {mu, nu, theta, sense}");
    c->add_option("--mu", mu, "source measure file");
    c->add_option("--nu", nu, "target measure file");
    c->add_option("--theta", theta, "payoff/cost matrix file");
    c->add_option("--sense", sense, "min or max");
    c->callback([&] {
      action = [&] { return run_ot_solve(ctx, file, mu, nu, theta, sense); };
    });
  }
  {
    static std::string mu, nu;
    auto* c = ot->add_subcommand("metric", "mass-transport distance (unbalanced allowed)");
    c->fallthrough();
    c->add_option("--mu", mu, "first measure")->required();
    c->add_option("--nu", nu, "second measure")->required();
    c->callback([&] { action = [&] { return run_ot_metric(ctx, mu, nu); }; });
  }

  // ---- match --------------------------------------------------------------
  auto* match = app.add_subcommand("match", "stable matching");
  match->require_subcommand(1);
  match->fallthrough();
  {
    static std::string file;
    auto* c = match->add_subcommand("gs", "proposer-optimal deferred acceptance");
    c->fallthrough();
    c->add_option("--file", file, "preference file {men, women}")->required();
    c->callback([&] { action = [&] { return run_match_gs(ctx, file); }; });
  }
  {
    static std::string file;
    static double p = 0.0, q = 0.0;
    static int kmax = 8;
    auto* c = match->add_subcommand("pq", "discounted exchange-stability audit");
    c->fallthrough();
    c->add_option("--file", file, "instance {theta_m, theta_w, match}")->required();
    c->add_option("--p", p, "row-side discount in [0,1]")->required();
    c->add_option("--q", q, "column-side discount in [0,1]")->required();
    c->add_option("--kmax", kmax, "longest exchange cycle to search");
    c->callback([&] { action = [&] { return run_match_pq(ctx, file, p, q, kmax); }; });
  }
  {
    static std::string mu, phi, psi, quota;
    auto* c = match->add_subcommand("partition", "quota-constrained deferred acceptance");
    c->fallthrough();
    c->add_option("--mu", mu, "atom measure")->required();
    c->add_option("--phi", phi, "atom-side scores (slots x atoms)")->required();
    c->add_option("--psi", psi, "slot-side scores (slots x atoms)")->required();
    c->add_option("--m", quota, "slot quotas, comma-separated")->required();
    c->callback([&] {
      action = [&] { return run_match_partition(ctx, mu, phi, psi, quota); };
    });
  }

  // ---- partition ----------------------------------------------------------
  auto* partition = app.add_subcommand("partition", "capacity-constrained screening");
  partition->require_subcommand(1);
  partition->fallthrough();
  {
    static std::string mu, theta, m, regime = "auto";
    auto* c = partition->add_subcommand("solve", "price-based partition of consumers");
    c->fallthrough();
    c->add_option("--mu", mu, "consumer measure")->required();
    c->add_option("--theta", theta, "utility matrix file (agents x atoms)")->required();
    c->add_option("--m", m, "capacities, comma-separated")->required();
    c->add_option("--regime", regime, "auto, exact, or atmost");
    c->callback([&] {
      action = [&] { return run_partition_solve(ctx, mu, theta, m, regime); };
    });
  }
  {
    static std::string mu, theta, base, lambda, m;
    auto* c = partition->add_subcommand("values", "per-agent collected utility");
    c->fallthrough();
    c->add_option("--mu", mu, "consumer measure")->required();
    c->add_option("--theta", theta, "utility matrix file");
    c->add_option("--base", base, "per-atom base utility (with --lambda)");
    c->add_option("--lambda", lambda, "proportional scalings, comma-separated");
    c->add_option("--m", m, "capacities, comma-separated")->required();
    c->callback([&] {
      action = [&] { return run_partition_values(ctx, mu, theta, base, lambda, m); };
    });
  }
  {
    static std::string mu, theta, m;
    static double dt = 0.5, esc = 1e3;
    static int steps = 200;
    auto* c = partition->add_subcommand("dynamics", "proximal price adjustment path");
    c->fallthrough();
    c->add_option("--mu", mu, "consumer measure")->required();
    c->add_option("--theta", theta, "utility matrix file")->required();
    c->add_option("--m", m, "capacities, comma-separated")->required();
    c->add_option("--dt", dt, "step size");
    c->add_option("--steps", steps, "maximum steps");
    c->add_option("--escalate-norm", esc, "price norm that counts as escalation");
    c->callback([&] {
      action = [&] {
        return run_partition_dynamics(ctx, mu, theta, m, dt, steps, esc);
      };
    });
  }

  // ---- multi --------------------------------------------------------------
  auto* multi = app.add_subcommand("multi", "vector-valued capacity partitions");
  multi->require_subcommand(1);
  multi->fallthrough();
  {
    static std::string mu, file;
    static bool sub = false;
    auto* c = multi->add_subcommand("feasible", "can the goods matrix be realized?");
    c->fallthrough();
    c->add_option("--mu", mu, "atom measure")->required();
    c->add_option("--file", file, "problem file {zeta, M}")->required();
    c->add_flag("--subpartition", sub, "allow atoms to stay unassigned");
    c->callback([&] { action = [&] { return run_multi_feasible(ctx, mu, file, sub); }; });
  }
  {
    static std::string m1, m2;
    auto* c = multi->add_subcommand("dominate", "row-splitting dominance test");
    c->fallthrough();
    c->add_option("--M1", m1, "finer capacity matrix file")->required();
    c->add_option("--M2", m2, "coarser capacity matrix file")->required();
    c->callback([&] { action = [&] { return run_multi_dominate(ctx, m1, m2); }; });
  }
  {
    static std::string mu, file;
    static double esc = 1e3;
    auto* c = multi->add_subcommand("solve", "utility-optimal goods partition");
    c->fallthrough();
    c->add_option("--mu", mu, "atom measure")->required();
    c->add_option("--file", file, "problem file {zeta, M, theta}")->required();
    c->add_option("--escalate-norm", esc, "price norm that counts as escalation");
    c->callback([&] { action = [&] { return run_multi_solve(ctx, mu, file, esc); }; });
  }
  {
    static std::string mu, share, thresholds;
    auto* c = multi->add_subcommand("region", "two-goods share-ratio capacity curve");
    c->fallthrough();
    c->add_option("--mu", mu, "atom measure")->required();
    c->add_option("--share", share, "per-atom share of the first good")->required();
    c->add_option("--thresholds", thresholds, "ratio sweep, comma-separated");
    c->callback([&] {
      action = [&] { return run_multi_region(ctx, mu, share, thresholds); };
    });
  }

  // ---- interp -------------------------------------------------------------
  auto* interp = app.add_subcommand("interp", "two-leg relay approximations");
  interp->require_subcommand(1);
  interp->fallthrough();
  static std::string i_mu, i_nu, i_sites, i_cost = "quadratic";
  auto add_common = [&](CLI::App* c, bool need_sites) {
    c->fallthrough();
    c->add_option("--mu", i_mu, "source measure")->required();
    c->add_option("--nu", i_nu, "target measure")->required();
    auto* s = c->add_option("--sites", i_sites, "relay site file");
    if (need_sites) s->required();
    c->add_option("--cost", i_cost,
                  "quadratic | power:r=R | tables:FILE (default quadratic)");
  };
  {
    auto* c = interp->add_subcommand("solve", "price equilibrium over fixed sites");
    add_common(c, true);
    c->callback([&] {
      action = [&] { return run_interp_solve(ctx, i_mu, i_nu, i_sites, i_cost); };
    });
  }
  {
    auto* c = interp->add_subcommand("improve", "one site-update step");
    add_common(c, true);
    c->callback([&] {
      action = [&] { return run_interp_improve(ctx, i_mu, i_nu, i_sites, i_cost); };
    });
  }
  {
    static int iters = 25;
    auto* c = interp->add_subcommand("loop", "alternate solve and site updates");
    add_common(c, true);
    c->add_option("--iters", iters, "maximum outer iterations");
    c->callback([&] {
      action = [&] {
        return run_interp_loop(ctx, i_mu, i_nu, i_sites, i_cost, iters);
      };
    });
  }
  {
    auto* c = interp->add_subcommand("gap", "relay value minus exact transport value");
    add_common(c, true);
    c->callback([&] {
      action = [&] { return run_interp_gap(ctx, i_mu, i_nu, i_sites, i_cost); };
    });
  }
  {
    static double s = 0.5;
    auto* c = interp->add_subcommand("mccann", "displacement interpolation");
    c->fallthrough();
    c->add_option("--mu", i_mu, "source measure")->required();
    c->add_option("--nu", i_nu, "target measure")->required();
    c->add_option("--s", s, "interpolation time in [0,1]");
    c->callback([&] {
      action = [&] { return run_interp_mccann(ctx, i_mu, i_nu, s); };
    });
  }
  {
    auto* c = interp->add_subcommand("hedonic", "commodity market with a null option");
    add_common(c, false);
    c->callback([&] {
      action = [&] { return run_interp_hedonic(ctx, i_mu, i_nu, i_sites, i_cost); };
    });
  }

  // ---- game ---------------------------------------------------------------
  auto* game = app.add_subcommand("game", "cooperative games on partition values");
  game->require_subcommand(1);
  game->fallthrough();
  static std::string g_mu, g_theta, g_m;
  {
    auto* c = game->add_subcommand("surplus", "coalition values from two-block solves");
    c->fallthrough();
    c->add_option("--mu", g_mu, "consumer measure")->required();
    c->add_option("--theta", g_theta, "utility matrix file")->required();
    c->add_option("--m", g_m, "capacities, comma-separated")->required();
    c->callback([&] {
      action = [&] { return run_game_surplus(ctx, g_mu, g_theta, g_m); };
    });
  }
  {
    auto* c = game->add_subcommand("profit", "capacity-rent coalition values");
    c->fallthrough();
    c->add_option("--mu", g_mu, "consumer measure")->required();
    c->add_option("--theta", g_theta, "utility matrix file")->required();
    c->add_option("--m", g_m, "capacities, comma-separated")->required();
    c->callback([&] {
      action = [&] { return run_game_profit(ctx, g_mu, g_theta, g_m); };
    });
  }
  {
    static std::string file;
    auto* c = game->add_subcommand("core", "core membership / emptiness certificate");
    c->fallthrough();
    c->add_option("--file", file, "game file {n, nu}")->required();
    c->callback([&] { action = [&] { return run_game_core(ctx, file); }; });
  }
  {
    static std::string p, grid, cap;
    static bool commission = false;
    auto* c = game->add_subcommand("nash", "grid audit of a posted-price profile");
    c->fallthrough();
    c->add_option("--mu", g_mu, "consumer measure")->required();
    c->add_option("--theta", g_theta, "utility matrix file")->required();
    c->add_option("--p", p, "posted prices (or commissions), comma-separated")->required();
    c->add_option("--grid", grid, "candidate deviations, comma-separated")->required();
    c->add_option("--cap", cap, "per-agent capacities (flat prices only)");
    c->add_flag("--commission", commission, "interpret --p as utility shares");
    c->callback([&] {
      action = [&] {
        return run_game_nash(ctx, g_mu, g_theta, p, grid, cap, commission);
      };
    });
  }
  {
    auto* c = game->add_subcommand("free", "consumer-differentiating price equilibrium");
    c->fallthrough();
    c->add_option("--mu", g_mu, "consumer measure")->required();
    c->add_option("--theta", g_theta, "utility matrix file")->required();
    c->callback([&] { action = [&] { return run_game_free(ctx, g_mu, g_theta); }; });
  }

  // ---- validate -----------------------------------------------------------
  {
    static std::string file;
    auto* c = app.add_subcommand("validate", "schema and invariant report (never fails)");
    c->fallthrough();
    c->add_option("--file", file, "file to inspect")->required();
    c->callback([&] { action = [&] { return run_validate(ctx, file); }; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    return action ? action() : 1;
  } catch (const PartransError& e) {
    std::fprintf(stderr, "partrans: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "partrans: %s\n", e.what());
    return 1;
  }
}
