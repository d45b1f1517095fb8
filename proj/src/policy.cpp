#include "halp/policy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "halp/special.hpp"
#include "halp/threading.hpp"

namespace halp {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
}

// ---------------------------------------------------------------------------
// q values

double q_value(const HybridModel& model, std::span<const Backprojection> backprojections,
               std::span<const double> w, std::span<const double> point) {
  if (w.size() != backprojections.size())
    throw MisuseError("q_value: weight count does not match the basis");
  double v = eval_reward(model, point);
  double future = 0.0;
  for (size_t i = 0; i < backprojections.size(); ++i)
    future += w[i] * backprojections[i].eval(point);
  return v + model.discount * future;
}

double q_value(const HybridModel& model, const std::vector<BasisFunction>& basis,
               std::span<const double> w, std::span<const double> point) {
  std::vector<Backprojection> bps;
  bps.reserve(basis.size());
  for (const auto& f : basis) bps.push_back(backproject(model, f));
  return q_value(model, bps, w, point);
}

// ---------------------------------------------------------------------------
// greedy policy

GreedyPolicy::GreedyPolicy(const HybridModel& model, const std::vector<BasisFunction>& basis,
                           std::vector<double> w, double action_eps, ActionSearch search)
    : model_(&model), w_(std::move(w)), search_(search) {
  if (w_.size() != basis.size())
    throw MisuseError("GreedyPolicy: weight count does not match the basis");
  bps_.reserve(basis.size());
  for (const auto& f : basis) bps_.push_back(backproject(model, f));
  grid_ = make_grid(model, action_eps, GridVars::action_only);
}

double GreedyPolicy::q_at(std::span<const double> state, std::span<const double> action) const {
  Point p = make_point(*model_, state, action);
  return q_value(*model_, bps_, w_, p);
}

std::vector<double> GreedyPolicy::act(std::span<const double> state, Rng* rng) const {
  const auto sizes = grid_.sizes();
  const size_t dims = sizes.size();
  Point point(static_cast<size_t>(model_->num_vars()));
  std::copy(state.begin(), state.end(), point.begin());

  std::vector<int> z(dims, 0);
  auto q_of = [&](std::span<const int> idx) {
    grid_.fill_point(idx, point);
    return q_value(*model_, bps_, w_, point);
  };

  std::vector<int> best_idx(dims, 0);
  if (dims == 0) return {};

  if (search_.kind == ActionSearch::Kind::exhaustive) {
    uint64_t n = grid_.num_points();
    double best_q = kNegInf;
    for (uint64_t it = 0; it < n; ++it) {
      double q = q_of(z);
      if (q > best_q) {
        best_q = q;
        best_idx = z;
      }
      for (size_t i = dims; i-- > 0;) {
        if (++z[i] < sizes[i]) break;
        z[i] = 0;
      }
    }
  } else {
    Rng fallback(0x6a5ull);
    Rng& r = rng ? *rng : fallback;
    double best_q = kNegInf;
    for (int restart = 0; restart < search_.restarts; ++restart) {
      if (restart == 0)
        std::fill(z.begin(), z.end(), 0);
      else
        for (size_t i = 0; i < dims; ++i)
          z[i] = static_cast<int>(r.uniform_int(static_cast<uint64_t>(sizes[i])));
      double q = q_of(z);
      for (int pass = 0; pass < search_.max_passes; ++pass) {
        bool improved = false;
        for (size_t axis = 0; axis < dims; ++axis) {
          int arg = z[axis];
          double local = q;
          int keep = z[axis];
          for (int v = 0; v < sizes[axis]; ++v) {
            if (v == keep) continue;
            z[axis] = v;
            double qv = q_of(z);
            if (qv > local) {
              local = qv;
              arg = v;
            }
          }
          z[axis] = arg;
          if (local > q) {
            q = local;
            improved = true;
          }
        }
        if (!improved) break;
      }
      if (q > best_q) {
        best_q = q;
        best_idx = z;
      }
    }
  }

  std::vector<double> action(dims);
  for (size_t i = 0; i < dims; ++i)
    action[i] = grid_.axes[i].values[static_cast<size_t>(best_idx[i])];
  return action;
}

std::vector<double> greedy_action(const GreedyPolicy& policy, std::span<const double> state) {
  return policy.act(state, nullptr);
}

// ---------------------------------------------------------------------------
// rollouts

std::vector<std::vector<double>> sample_initial_states(const HybridModel& model, int n,
                                                       uint64_t seed) {
  Rng rng(substream_seed(seed, 0x1717ull));
  std::vector<std::vector<double>> states;
  states.reserve(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    std::vector<double> x(static_cast<size_t>(model.num_state_vars()));
    for (int v = 0; v < model.num_state_vars(); ++v) {
      const auto& spec = model.state_vars[static_cast<size_t>(v)];
      x[static_cast<size_t>(v)] =
          spec.kind == VarKind::continuous
              ? rng.uniform()
              : static_cast<double>(rng.uniform_int(static_cast<uint64_t>(spec.domain_size)));
    }
    states.push_back(std::move(x));
  }
  return states;
}

RolloutReport rollout(const HybridModel& model, const Controller& controller, int n_traj,
                      int horizon, uint64_t seed,
                      const std::vector<std::vector<double>>& initial_states) {
  if (horizon < 1) throw MisuseError("rollout: horizon must be >= 1");
  if (n_traj < 1) throw MisuseError("rollout: need at least one trajectory");
  if (initial_states.empty()) throw MisuseError("rollout: initial-state set is empty");

  RolloutReport report;
  report.trajectories = n_traj;
  report.horizon = horizon;
  report.seed = seed;
  report.per_traj_average.assign(static_cast<size_t>(n_traj), 0.0);
  report.per_traj_discounted.assign(static_cast<size_t>(n_traj), 0.0);

  parallel_chunks(n_traj, n_traj, [&](int t, int64_t, int64_t) {
    Rng rng(substream_seed(seed, static_cast<uint64_t>(t)));
    std::vector<double> x = initial_states[static_cast<size_t>(t) % initial_states.size()];
    double total = 0.0;
    double discounted = 0.0;
    double gamma_pow = 1.0;
    for (int step = 0; step < horizon; ++step) {
      std::vector<double> a = controller(x, rng);
      Point p = make_point(model, x, a);
      double r = eval_reward(model, p);
      total += r;
      discounted += gamma_pow * r;
      gamma_pow *= model.discount;
      x = sample_transition(model, p, rng);
    }
    report.per_traj_average[static_cast<size_t>(t)] = total / horizon;
    report.per_traj_discounted[static_cast<size_t>(t)] = discounted;
  });

  double sum = 0.0;
  for (double v : report.per_traj_average) sum += v;
  report.mean = sum / n_traj;
  double ss = 0.0;
  for (double v : report.per_traj_average) ss += (v - report.mean) * (v - report.mean);
  report.stddev = n_traj > 1 ? std::sqrt(ss / (n_traj - 1)) : 0.0;
  return report;
}

double pooled_standard_error(const RolloutReport& a, const RolloutReport& b) {
  double va = a.stddev * a.stddev / std::max(a.trajectories, 1);
  double vb = b.stddev * b.stddev / std::max(b.trajectories, 1);
  return std::sqrt(va + vb);
}

// ---------------------------------------------------------------------------
// one-step expected reward

namespace {

/// Expected value of an expression over the next-state distribution of the
/// continuous state variables in its scope. Action-variable positions read
/// directly from the point. `sampled` holds per-position sampled values for
/// forms without a closed-form expectation (filled lazily).
double expected_expr(const HybridModel& model, const ContinuousExpr& expr,
                     const ScopedFunction& owner, std::span<const double> point, Rng& rng) {
  switch (expr.form) {
    case ContinuousExpr::Form::constant:
      return expr.constant;
    case ContinuousExpr::Form::polynomial: {
      double sum = 0.0;
      for (const auto& t : expr.poly) {
        double v = t.coef;
        for (size_t j = 0; j < t.degrees.size(); ++j) {
          int m = t.degrees[j];
          if (m == 0) continue;
          VarId id = owner.cont_ids[j];
          if (model.is_state(id)) {
            const Cpf& cpf = model.cpf_for(id);
            if (const auto* b = std::get_if<BetaCpf>(&cpf))
              v *= b->moment(m, point);
            else
              v *= std::get<MixtureBetaCpf>(cpf).moment(m, point);
          } else {
            double x = point[static_cast<size_t>(id)];
            for (int d = 0; d < m; ++d) v *= x;
          }
        }
        sum += v;
      }
      return sum;
    }
    case ContinuousExpr::Form::piecewise_linear: {
      double sum = 0.0;
      for (const auto& t : expr.pwl) {
        VarId id = owner.cont_ids[static_cast<size_t>(t.var_pos)];
        if (!model.is_state(id)) {
          sum += t.eval(point[static_cast<size_t>(id)]);
          continue;
        }
        const Cpf& cpf = model.cpf_for(id);
        auto expect_under = [&](const BetaCpf& b) {
          auto [a1, a2] = b.shapes(point);
          double total = 0.0;
          for (size_t i = 0; i + 1 < t.knots.size(); ++i) {
            double lo = t.knots[i], hi = t.knots[i + 1];
            double slope = (t.values[i + 1] - t.values[i]) / (hi - lo);
            double intercept = t.values[i] - slope * lo;
            total += intercept * beta_segment_prob(a1, a2, lo, hi) +
                     slope * beta_segment_mean(a1, a2, lo, hi);
          }
          return total;
        };
        if (const auto* b = std::get_if<BetaCpf>(&cpf))
          sum += expect_under(*b);
        else {
          const auto& mx = std::get<MixtureBetaCpf>(cpf);
          double v = 0.0;
          for (const auto& c : mx.components) v += c.weight * expect_under(c.beta);
          sum += v;
        }
      }
      return sum;
    }
    case ContinuousExpr::Form::gaussian_mixture: {
      // no closed form under a beta next-state density: one-sample estimate
      double sum = 0.0;
      for (const auto& t : expr.gauss) {
        VarId id = owner.cont_ids[static_cast<size_t>(t.var_pos)];
        double x;
        if (model.is_state(id)) {
          const Cpf& cpf = model.cpf_for(id);
          if (const auto* b = std::get_if<BetaCpf>(&cpf))
            x = b->sample(point, rng);
          else
            x = std::get<MixtureBetaCpf>(cpf).sample(point, rng);
        } else {
          x = point[static_cast<size_t>(id)];
        }
        sum += t.eval(x);
      }
      return sum;
    }
  }
  return 0.0;
}

}  // namespace

double expected_factor_value(const HybridModel& model, const ScopedFunction& factor,
                             std::span<const double> point, Rng& rng) {
  // discrete scope: next-state probabilities for state variables, point
  // values for action variables
  size_t nd = factor.disc_ids.size();
  std::vector<std::vector<double>> probs(nd);
  for (size_t i = 0; i < nd; ++i) {
    VarId id = factor.disc_ids[i];
    if (model.is_state(id)) {
      const auto& d = std::get<DiscriminantCpf>(model.cpf_for(id));
      probs[i].resize(d.discriminants.size());
      d.probabilities(point, probs[i]);
    } else {
      probs[i].assign(static_cast<size_t>(factor.disc_sizes[i]), 0.0);
      probs[i][static_cast<size_t>(point[static_cast<size_t>(id)])] = 1.0;
    }
  }

  double total = 0.0;
  std::vector<int> assign(nd, 0);
  for (size_t idx = 0; idx < factor.table.size(); ++idx) {
    double mass = 1.0;
    for (size_t i = 0; i < nd; ++i) mass *= probs[i][static_cast<size_t>(assign[i])];
    if (mass > 0.0)
      total += mass * expected_expr(model, factor.table[idx], factor, point, rng);
    for (size_t i = nd; i-- > 0;) {
      if (++assign[i] < factor.disc_sizes[i]) break;
      assign[i] = 0;
    }
  }
  return total;
}

// ---------------------------------------------------------------------------
// heuristic controllers

namespace {

std::vector<VarId> cpf_parent_scope(const Cpf& cpf) {
  std::vector<VarId> scope;
  auto merge = [&](const ScopedFunction& f) {
    auto ids = f.scope_ids();
    scope.insert(scope.end(), ids.begin(), ids.end());
  };
  if (const auto* b = std::get_if<BetaCpf>(&cpf)) {
    merge(b->h1);
    merge(b->h2);
  } else if (const auto* m = std::get_if<MixtureBetaCpf>(&cpf)) {
    for (const auto& c : m->components) {
      merge(c.beta.h1);
      merge(c.beta.h2);
    }
  } else {
    for (const auto& d : std::get<DiscriminantCpf>(cpf).discriminants) merge(d);
  }
  std::sort(scope.begin(), scope.end());
  scope.erase(std::unique(scope.begin(), scope.end()), scope.end());
  return scope;
}

}  // namespace

NamedController heuristic_controller(const HybridModel& model, HeuristicKind kind,
                                     double action_eps, int trials) {
  EpsGrid grid = make_grid(model, action_eps, GridVars::action_only);
  auto sizes = grid.sizes();
  size_t dims = sizes.size();
  int n_state = model.num_state_vars();

  if (kind == HeuristicKind::random) {
    return {"random", [grid, sizes, dims](std::span<const double>, Rng& rng) {
              std::vector<double> a(dims);
              for (size_t i = 0; i < dims; ++i)
                a[i] = grid.axes[i]
                           .values[rng.uniform_int(static_cast<uint64_t>(sizes[i]))];
              return a;
            }};
  }

  if (kind == HeuristicKind::local) {
    // reward factor j touches action variable d when d is in the factor's
    // scope or is a parent of the CPF of some state variable in the scope
    std::vector<std::vector<size_t>> touching(dims);
    for (size_t j = 0; j < model.rewards.size(); ++j) {
      std::vector<VarId> acted;
      for (VarId id : model.rewards[j].scope_ids()) {
        if (!model.is_state(id)) {
          acted.push_back(id);
          continue;
        }
        for (VarId p : cpf_parent_scope(model.cpf_for(id)))
          if (!model.is_state(p)) acted.push_back(p);
      }
      std::sort(acted.begin(), acted.end());
      acted.erase(std::unique(acted.begin(), acted.end()), acted.end());
      for (VarId id : acted)
        touching[static_cast<size_t>(id - n_state)].push_back(j);
    }

    const HybridModel* m = &model;
    return {"local", [m, grid, sizes, dims, touching, n_state](std::span<const double> state,
                                                               Rng& rng) {
              Point point(static_cast<size_t>(m->num_vars()));
              std::copy(state.begin(), state.end(), point.begin());
              // all devices parked at their first grid value
              for (size_t i = 0; i < dims; ++i)
                point[static_cast<size_t>(n_state) + i] = grid.axes[i].values[0];
              std::vector<double> a(dims);
              for (size_t i = 0; i < dims; ++i) {
                int best_v = 0;
                double best_score = -std::numeric_limits<double>::infinity();
                for (int v = 0; v < sizes[i]; ++v) {
                  point[static_cast<size_t>(n_state) + i] =
                      grid.axes[i].values[static_cast<size_t>(v)];
                  double score = 0.0;
                  for (size_t j : touching[i])
                    score += expected_factor_value(*m, m->rewards[j], point, rng);
                  if (score > best_score) {
                    best_score = score;
                    best_v = v;
                  }
                }
                a[i] = grid.axes[i].values[static_cast<size_t>(best_v)];
                point[static_cast<size_t>(n_state) + i] = grid.axes[i].values[0];  // reset
              }
              return a;
            }};
  }

  // global: score sampled joint actions by total one-step expected reward;
  // enumerate instead when the trial budget covers the whole grid
  uint64_t joint = grid.num_points();
  bool enumerate = static_cast<uint64_t>(trials) >= joint;
  const HybridModel* m = &model;
  std::string name = "global(" + std::to_string(trials) + ")";
  return {name, [m, grid, sizes, dims, trials, joint, enumerate](std::span<const double> state,
                                                                 Rng& rng) {
            Point point(static_cast<size_t>(m->num_vars()));
            std::copy(state.begin(), state.end(), point.begin());
            std::vector<int> z(dims, 0);
            std::vector<int> best = z;
            double best_score = -std::numeric_limits<double>::infinity();
            uint64_t count = enumerate ? joint : static_cast<uint64_t>(trials);
            for (uint64_t it = 0; it < count; ++it) {
              if (!enumerate)
                for (size_t i = 0; i < dims; ++i)
                  z[i] = static_cast<int>(rng.uniform_int(static_cast<uint64_t>(sizes[i])));
              grid.fill_point(z, point);
              double score = 0.0;
              for (const auto& r : m->rewards)
                score += expected_factor_value(*m, r, point, rng);
              if (score > best_score) {
                best_score = score;
                best = z;
              }
              if (enumerate)
                for (size_t i = dims; i-- > 0;) {
                  if (++z[i] < sizes[i]) break;
                  z[i] = 0;
                }
            }
            std::vector<double> a(dims);
            for (size_t i = 0; i < dims; ++i)
              a[i] = grid.axes[i].values[static_cast<size_t>(best[i])];
            return a;
          }};
}

// ---------------------------------------------------------------------------
// value-iteration oracle

void DiscretizedMdp::state_values(uint64_t s, std::span<double> out) const {
  for (size_t i = state_grid.axes.size(); i-- > 0;) {
    const auto& axis = state_grid.axes[i];
    out[i] = axis.values[static_cast<size_t>(s % static_cast<uint64_t>(axis.size()))];
    s /= static_cast<uint64_t>(axis.size());
  }
}

void DiscretizedMdp::action_values(uint64_t a, std::span<double> out) const {
  for (size_t i = action_grid.axes.size(); i-- > 0;) {
    const auto& axis = action_grid.axes[i];
    out[i] = axis.values[static_cast<size_t>(a % static_cast<uint64_t>(axis.size()))];
    a /= static_cast<uint64_t>(axis.size());
  }
}

uint64_t DiscretizedMdp::nearest_state(std::span<const double> state) const {
  uint64_t flat = 0;
  for (size_t i = 0; i < state_grid.axes.size(); ++i) {
    int idx = state_grid.nearest_index(static_cast<int>(i), state[i]);
    flat = flat * static_cast<uint64_t>(state_grid.axes[i].size()) + static_cast<uint64_t>(idx);
  }
  return flat;
}

DiscretizedMdp discretize_model(const HybridModel& model, double state_eps, double action_eps,
                                uint64_t max_states) {
  if (!model.bound()) throw MisuseError("discretize_model: model is not bound");
  DiscretizedMdp mdp;
  mdp.model = &model;
  mdp.state_grid = make_grid(model, state_eps, GridVars::state_only);
  mdp.action_grid = make_grid(model, action_eps, GridVars::action_only);
  mdp.n_states = mdp.state_grid.num_points();
  mdp.n_actions = mdp.action_grid.num_points();
  if (mdp.n_states > max_states)
    throw BudgetError("discretize_model: state space too large (" + std::to_string(mdp.n_states) +
                      " joint states)");
  if (mdp.n_states * mdp.n_actions * mdp.n_states > 50000000ull)
    throw BudgetError("discretize_model: transition kernel too large to materialize");

  size_t ns = static_cast<size_t>(mdp.n_states);
  size_t na = static_cast<size_t>(mdp.n_actions);
  mdp.rewards.assign(ns * na, 0.0);
  mdp.kernel.assign(ns * na * ns, 0.0);

  size_t n_axes_s = mdp.state_grid.axes.size();
  size_t n_axes_a = mdp.action_grid.axes.size();
  Point point(static_cast<size_t>(model.num_vars()));
  std::vector<double> svals(n_axes_s), avals(n_axes_a);

  // per-(s,a): normalized next distribution per state variable, then a joint
  // product over the state grid
  std::vector<std::vector<double>> per_var(n_axes_s);
  for (size_t s = 0; s < ns; ++s) {
    mdp.state_values(s, svals);
    for (size_t i = 0; i < n_axes_s; ++i)
      point[static_cast<size_t>(mdp.state_grid.axes[i].var)] = svals[i];
    for (size_t a = 0; a < na; ++a) {
      mdp.action_values(a, avals);
      for (size_t i = 0; i < n_axes_a; ++i)
        point[static_cast<size_t>(mdp.action_grid.axes[i].var)] = avals[i];

      mdp.rewards[s * na + a] = eval_reward(model, point);

      for (size_t v = 0; v < n_axes_s; ++v) {
        const auto& axis = mdp.state_grid.axes[v];
        auto& pv = per_var[v];
        pv.assign(axis.values.size(), 0.0);
        VarId id = axis.var;
        if (model.var(id).kind == VarKind::continuous) {
          double total = 0.0;
          for (size_t k = 0; k < axis.values.size(); ++k) {
            double d = std::visit(
                [&](const auto& c) -> double {
                  using T = std::decay_t<decltype(c)>;
                  if constexpr (std::is_same_v<T, DiscriminantCpf>)
                    return 0.0;
                  else
                    return c.density(axis.values[k], point);
                },
                model.cpf_for(id));
            pv[k] = d;
            total += d;
          }
          for (auto& p : pv) p /= total;
        } else {
          const auto& d = std::get<DiscriminantCpf>(model.cpf_for(id));
          d.probabilities(point, pv);
        }
      }

      double* row = &mdp.kernel[(s * na + a) * ns];
      std::vector<int> z(n_axes_s, 0);
      for (size_t sp = 0; sp < ns; ++sp) {
        double prob = 1.0;
        for (size_t v = 0; v < n_axes_s; ++v) prob *= per_var[v][static_cast<size_t>(z[v])];
        row[sp] = prob;
        for (size_t v = n_axes_s; v-- > 0;) {
          if (++z[v] < mdp.state_grid.axes[v].size()) break;
          z[v] = 0;
        }
      }
    }
  }
  return mdp;
}

ViResult value_iteration(const DiscretizedMdp& mdp, double tol, int max_iterations) {
  size_t ns = static_cast<size_t>(mdp.n_states);
  size_t na = static_cast<size_t>(mdp.n_actions);
  double gamma = mdp.model->discount;

  ViResult res;
  res.values.assign(ns, 0.0);
  res.greedy.assign(ns, 0);
  std::vector<double> next(ns, 0.0);

  for (int iter = 0; iter < max_iterations; ++iter) {
    double residual = 0.0;
    for (size_t s = 0; s < ns; ++s) {
      double best = kNegInf;
      uint32_t arg = 0;
      for (size_t a = 0; a < na; ++a) {
        const double* row = &mdp.kernel[(s * na + a) * ns];
        double ev = 0.0;
        for (size_t sp = 0; sp < ns; ++sp) ev += row[sp] * res.values[sp];
        double q = mdp.rewards[s * na + a] + gamma * ev;
        if (q > best) {
          best = q;
          arg = static_cast<uint32_t>(a);
        }
      }
      next[s] = best;
      res.greedy[s] = arg;
      residual = std::max(residual, std::fabs(best - res.values[s]));
    }
    res.values.swap(next);
    res.iterations = iter + 1;
    res.residual = residual;
    if (residual <= tol) return res;
  }
  throw BudgetError("value_iteration: did not reach the residual tolerance within the iteration "
                    "cap");
}

NamedController vi_controller(const DiscretizedMdp& mdp, const ViResult& vi) {
  const DiscretizedMdp* m = &mdp;
  std::vector<uint32_t> greedy = vi.greedy;
  return {"vi-optimal", [m, greedy](std::span<const double> state, Rng&) {
            uint64_t s = m->nearest_state(state);
            std::vector<double> a(m->action_grid.axes.size());
            m->action_values(greedy[static_cast<size_t>(s)], a);
            return a;
          }};
}

}  // namespace halp
