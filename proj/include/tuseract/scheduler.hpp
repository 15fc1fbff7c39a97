#pragma once

// Sample-average cluster scheduling. A plan fixes the green interval of
// every (phase, cycle) over the horizon; given a plan, each sample's
// clusters are dispatched greedily (earliest start, FIFO per phase, split at
// window ends). The solver branches only on interval lengths.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <istream>
#include <limits>
#include <numeric>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "tuseract/traffic_model.hpp"

namespace tuseract {

struct ScheduleProblem {
  PhaseModel phase_model;
  InitialConditions initial;
  Seconds now = 0;
  std::size_t horizon_cycles = 3;
  std::vector<InflowSample> samples;
};

enum class SolveStatus { optimal, feasible, infeasible };

inline const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::optimal: return "optimal";
    case SolveStatus::feasible: return "feasible";
    case SolveStatus::infeasible: return "infeasible";
  }
  return "?";
}

/// Portion of cluster (sample, phase, cluster) leaving in one cycle.
/// Overflow fragments are the remainder that does not fit in the horizon;
/// they carry cycle == horizon_cycles and start at or after the horizon end.
struct Fragment {
  std::size_t sample = 0;
  std::size_t phase = 0;
  std::size_t cluster = 0;
  std::size_t cycle = 0;
  Seconds start = 0;
  Seconds length = 0;
  bool overflow = false;

  bool operator==(const Fragment&) const = default;
};

struct ClusterSchedule {
  std::vector<Fragment> fragments;
};

struct SolveLimits {
  double time_limit = 5.0;        // wall-clock seconds
  std::int64_t node_limit = -1;   // search nodes, -1 for unlimited
  bool enforce_wall_clock = true;
};

struct SolveStats {
  std::int64_t nodes = 0;
  double wall_seconds = 0.0;
  std::size_t unique_samples = 0;
  bool warm_start_feasible = false;
  std::optional<double> warm_start_objective;
};

struct Solution {
  SignalTimingPlan plan;
  ClusterSchedule schedules;
  double objective = 0.0;  // mean vehicle-seconds of delay per sample
  SolveStatus status = SolveStatus::infeasible;
  SolveStats stats;
  std::string diagnostics;
};

/// Cluster on the 1 s controller grid.
struct GridCluster {
  Seconds arrival = 0;
  Seconds length = 1;
  double count = 0.0;
};

/// Arrivals round to the nearest second (never before `now`); lengths round
/// up to whole seconds, minimum one.
inline GridCluster to_grid(const Cluster& c, Seconds now) {
  GridCluster g;
  g.arrival = std::max<Seconds>(now, static_cast<Seconds>(std::llround(c.arrival)));
  g.length = std::max<Seconds>(1, static_cast<Seconds>(std::ceil(c.length - 1e-9)));
  g.count = c.count;
  return g;
}

struct DispatchResult {
  std::vector<Fragment> fragments;
  double delay = 0.0;
};

/// Greedy dispatch of one sample under a fixed plan: each cluster starts at
/// the earliest of its arrival, its predecessor's completion and the next
/// green window, and is split when the window closes. Mass left after the
/// last window departs from the horizon end onward.
inline DispatchResult dispatch_given_plan(const SignalTimingPlan& plan, const PhaseModel& pm,
                                          const InflowSample& sample, Seconds now,
                                          std::size_t sample_index = 0) {
  DispatchResult out;
  const Seconds hend = horizon_end(plan, pm);
  for (std::size_t k = 0; k < sample.per_phase.size(); ++k) {
    const auto& clusters = sample.per_phase[k];
    if (clusters.empty()) continue;
    std::size_t q = 0;
    GridCluster cur = to_grid(clusters[0], now);
    Seconds remaining = cur.length;
    Seconds cursor = std::numeric_limits<Seconds>::min();

    auto serve = [&](Seconds win_start, Seconds win_end, std::size_t cycle, bool overflow) {
      Seconds t = std::max(win_start, cursor);
      while (q < clusters.size()) {
        const Seconds start = std::max(t, cur.arrival);
        if (start >= win_end) break;
        const Seconds len = std::min(remaining, win_end - start);
        out.fragments.push_back({sample_index, k, q, cycle, start, len, overflow});
        out.delay += static_cast<double>(start - cur.arrival) * cur.count *
                     (static_cast<double>(len) / static_cast<double>(cur.length));
        remaining -= len;
        t = start + len;
        cursor = t;
        if (remaining > 0) break;
        if (++q < clusters.size()) {
          cur = to_grid(clusters[q], now);
          remaining = cur.length;
        }
      }
    };

    for (const auto& iv : plan.intervals)
      if (iv.phase == k) serve(iv.start, iv.end, iv.cycle, false);
    serve(hend, std::numeric_limits<Seconds>::max(), plan.horizon_cycles, true);
  }
  return out;
}

/// Mean over samples of the fragment-weighted delay
/// (start - arrival) * count * fragment_length / cluster_length.
inline double evaluate_solution(const SignalTimingPlan& /*plan*/, const ClusterSchedule& schedules,
                                const std::vector<InflowSample>& samples, Seconds now) {
  if (samples.empty()) return 0.0;
  double total = 0.0;
  for (const auto& f : schedules.fragments) {
    if (f.sample >= samples.size() || f.phase >= samples[f.sample].per_phase.size() ||
        f.cluster >= samples[f.sample].per_phase[f.phase].size())
      throw std::out_of_range("fragment references a cluster that does not exist");
    const GridCluster c = to_grid(samples[f.sample].per_phase[f.phase][f.cluster], now);
    total += static_cast<double>(f.start - c.arrival) * c.count *
             (static_cast<double>(f.length) / static_cast<double>(c.length));
  }
  return total / static_cast<double>(samples.size());
}

/// Mean dispatch delay of `plan` over every sample of the problem.
inline double mean_dispatch_delay(const SignalTimingPlan& plan, const ScheduleProblem& problem) {
  if (problem.samples.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t s = 0; s < problem.samples.size(); ++s)
    total += dispatch_given_plan(plan, problem.phase_model, problem.samples[s], problem.now, s).delay;
  return total / static_cast<double>(problem.samples.size());
}

inline ClusterSchedule dispatch_all(const SignalTimingPlan& plan, const ScheduleProblem& problem) {
  ClusterSchedule out;
  for (std::size_t s = 0; s < problem.samples.size(); ++s) {
    auto r = dispatch_given_plan(plan, problem.phase_model, problem.samples[s], problem.now, s);
    out.fragments.insert(out.fragments.end(), r.fragments.begin(), r.fragments.end());
  }
  return out;
}

/// Admissible length range of every slot (slot j = j-th interval of the plan).
struct SlotBounds {
  std::vector<std::size_t> phase;
  std::vector<Seconds> lo;
  std::vector<Seconds> hi;
};

inline SlotBounds slot_bounds(const ScheduleProblem& problem) {
  const auto& pm = problem.phase_model;
  SlotBounds b;
  const std::size_t n = pm.size() * problem.horizon_cycles;
  for (std::size_t j = 0; j < n; ++j) {
    const std::size_t k = (problem.initial.current_phase + j) % pm.size();
    b.phase.push_back(k);
    b.lo.push_back(j == 0 ? std::max(pm[k].g_min, problem.initial.elapsed_green) : pm[k].g_min);
    b.hi.push_back(pm[k].g_max);
  }
  return b;
}

inline void validate_problem(const ScheduleProblem& problem) {
  if (problem.phase_model.phases.empty()) throw std::invalid_argument("phase model is empty");
  if (problem.horizon_cycles < 1) throw std::invalid_argument("horizon must span at least one cycle");
  if (problem.initial.current_phase >= problem.phase_model.size())
    throw std::invalid_argument("current phase index out of range");
  if (problem.initial.elapsed_green < 0) throw std::invalid_argument("elapsed green must be >= 0");
  for (const auto& s : problem.samples) {
    if (s.per_phase.size() != problem.phase_model.size())
      throw std::invalid_argument("sample phase count differs from the phase model");
    for (const auto& phase : s.per_phase)
      for (std::size_t q = 0; q < phase.size(); ++q) {
        if (!(phase[q].count > 0.0) || !(phase[q].length > 0.0))
          throw std::invalid_argument("cluster count and length must be positive");
        if (q > 0 && phase[q].arrival < phase[q - 1].arrival)
          throw std::invalid_argument("cluster arrivals must be non-decreasing within a phase");
      }
  }
}

namespace detail {

struct QueueState {
  std::uint32_t next = 0;     // first cluster not fully served
  Seconds served = 0;         // prefix of `next` already served
  Seconds cursor = std::numeric_limits<Seconds>::min();  // end of the last served mass
};

/// Branch-and-bound over interval lengths on the integer grid. Samples that
/// are identical are folded together with integer multiplicities.
class PlanSearch {
 public:
  PlanSearch(const ScheduleProblem& problem, const SolveLimits& limits)
      : problem_(problem), limits_(limits), bounds_(slot_bounds(problem)) {
    const auto& pm = problem.phase_model;
    phases_ = pm.size();
    slots_ = bounds_.phase.size();
    for (std::size_t j = 0; j < slots_; ++j) intergreen_.push_back(pm[bounds_.phase[j]].intergreen);

    std::vector<std::int64_t> mult;
    for (const auto& s : problem.samples) {
      std::size_t idx = 0;
      for (; idx < unique_.size(); ++idx)
        if (*unique_[idx] == s) break;
      if (idx == unique_.size()) {
        unique_.push_back(&s);
        mult.push_back(0);
      }
      ++mult[idx];
    }
    std::int64_t g = 0;
    for (auto m : mult) g = std::gcd(g, m);
    for (auto m : mult) weight_.push_back(static_cast<double>(m / std::max<std::int64_t>(g, 1)));
    weight_total_ = 0.0;
    for (double w : weight_) weight_total_ += w;

    grid_.resize(unique_.size());
    for (std::size_t u = 0; u < unique_.size(); ++u) {
      grid_[u].resize(phases_);
      for (std::size_t k = 0; k < phases_; ++k)
        for (const auto& c : unique_[u]->per_phase[k]) grid_[u][k].push_back(to_grid(c, problem.now));
    }

    // offset_[i][k]: minimal time from the start of slot i to the start of
    // the next slot of phase k at or after i (or to the horizon end).
    offset_.assign(slots_ + 1, std::vector<Seconds>(phases_, 0));
    for (std::size_t i = 0; i <= slots_; ++i)
      for (std::size_t k = 0; k < phases_; ++k) {
        Seconds acc = 0;
        std::size_t m = i;
        while (m < slots_ && bounds_.phase[m] != k) {
          acc += bounds_.lo[m] + intergreen_[m];
          ++m;
        }
        offset_[i][k] = acc;
      }
  }

  std::size_t unique_samples() const { return unique_.size(); }
  double weight_total() const { return weight_total_; }

  /// Weighted total delay of a complete plan, computed incrementally.
  double plan_cost(const std::vector<Seconds>& lengths) const {
    auto state = initial_state();
    double cost = 0.0;
    Seconds t = start_time();
    for (std::size_t j = 0; j < slots_; ++j) {
      for (std::size_t u = 0; u < unique_.size(); ++u)
        cost += weight_[u] * serve_window(u, bounds_.phase[j], state[u][bounds_.phase[j]], t, t + lengths[j]);
      t += lengths[j] + intergreen_[j];
    }
    for (std::size_t u = 0; u < unique_.size(); ++u)
      for (std::size_t k = 0; k < phases_; ++k) cost += weight_[u] * relaxed_cost(u, k, state[u][k], t);
    return cost;
  }

  void offer(const std::vector<Seconds>& lengths, double cost) {
    if (!has_incumbent_ || better(cost, lengths)) {
      best_ = lengths;
      best_cost_ = cost;
      has_incumbent_ = true;
    }
  }

  /// Runs the search; returns true when the tree was exhausted.
  bool run() {
    started_ = std::chrono::steady_clock::now();
    auto state = initial_state();
    std::vector<Seconds> prefix;
    prefix.reserve(slots_);
    aborted_ = false;
    dfs(0, start_time(), state, 0.0, prefix);
    return !aborted_;
  }

  const std::vector<Seconds>& best() const { return best_; }
  double best_cost() const { return best_cost_; }
  std::int64_t nodes() const { return nodes_; }

 private:
  using State = std::vector<std::vector<QueueState>>;

  Seconds start_time() const { return problem_.now - problem_.initial.elapsed_green; }

  State initial_state() const { return State(unique_.size(), std::vector<QueueState>(phases_)); }

  double tolerance() const { return 1e-9 * std::max(1.0, std::abs(best_cost_)); }

  bool better(double cost, const std::vector<Seconds>& lengths) const {
    if (cost < best_cost_ - tolerance()) return true;
    return cost <= best_cost_ + tolerance() && lengths < best_;
  }

  /// Serves phase k of sample u greedily in [start, end); returns delay.
  double serve_window(std::size_t u, std::size_t k, QueueState& st, Seconds start, Seconds end) const {
    const auto& cl = grid_[u][k];
    double cost = 0.0;
    Seconds t = std::max(start, st.cursor);
    while (st.next < cl.size()) {
      const GridCluster& c = cl[st.next];
      const Seconds s = std::max(t, c.arrival);
      if (s >= end) break;
      const Seconds rem = c.length - st.served;
      const Seconds len = std::min(rem, end - s);
      cost += static_cast<double>(s - c.arrival) * c.count *
              (static_cast<double>(len) / static_cast<double>(c.length));
      t = s + len;
      st.cursor = t;
      if (len < rem) {
        st.served += len;
        break;
      }
      st.served = 0;
      ++st.next;
    }
    return cost;
  }

  /// Delay of the remaining mass if phase k could serve it without
  /// interruption from `from` on. No completion of the plan can do better,
  /// so this is both the lower bound and the exact overflow cost.
  double relaxed_cost(std::size_t u, std::size_t k, const QueueState& st, Seconds from) const {
    const auto& cl = grid_[u][k];
    double cost = 0.0;
    Seconds t = std::max(from, st.cursor);
    Seconds served = st.served;
    for (std::size_t q = st.next; q < cl.size(); ++q) {
      const GridCluster& c = cl[q];
      const Seconds s = std::max(t, c.arrival);
      const Seconds rem = c.length - served;
      cost += static_cast<double>(s - c.arrival) * c.count *
              (static_cast<double>(rem) / static_cast<double>(c.length));
      t = s + rem;
      served = 0;
    }
    return cost;
  }

  bool drained(const State& st) const {
    for (std::size_t u = 0; u < unique_.size(); ++u)
      for (std::size_t k = 0; k < phases_; ++k)
        if (st[u][k].next < grid_[u][k].size()) return false;
    return true;
  }

  bool out_of_budget() {
    if (limits_.node_limit >= 0 && nodes_ >= limits_.node_limit) return true;
    if (limits_.enforce_wall_clock && (nodes_ & 255) == 0) {
      const double el = std::chrono::duration<double>(std::chrono::steady_clock::now() - started_).count();
      if (el >= limits_.time_limit) return true;
    }
    return false;
  }

  /// -1 if prefix < incumbent prefix, 0 if equal, +1 if greater.
  int compare_prefix(const std::vector<Seconds>& prefix) const {
    for (std::size_t i = 0; i < prefix.size(); ++i) {
      if (prefix[i] < best_[i]) return -1;
      if (prefix[i] > best_[i]) return 1;
    }
    return 0;
  }

  struct Child {
    double bound;
    Seconds length;
    double step_cost;
  };

  void dfs(std::size_t j, Seconds t, State& state, double fixed, std::vector<Seconds>& prefix) {
    if (aborted_) return;
    if (out_of_budget()) {
      aborted_ = true;
      return;
    }
    ++nodes_;

    if (drained(state) || j == slots_) {
      double cost = fixed;
      if (j == slots_) {
        for (std::size_t u = 0; u < unique_.size(); ++u)
          for (std::size_t k = 0; k < phases_; ++k) cost += weight_[u] * relaxed_cost(u, k, state[u][k], t);
      }
      std::vector<Seconds> full = prefix;
      for (std::size_t i = j; i < slots_; ++i) full.push_back(bounds_.lo[i]);
      offer(full, cost);
      return;
    }

    const std::size_t k = bounds_.phase[j];
    std::vector<Child> children;
    children.reserve(static_cast<std::size_t>(bounds_.hi[j] - bounds_.lo[j] + 1));
    std::vector<QueueState> trial(unique_.size());
    for (Seconds len = bounds_.lo[j]; len <= bounds_.hi[j]; ++len) {
      double step = 0.0;
      for (std::size_t u = 0; u < unique_.size(); ++u) {
        trial[u] = state[u][k];
        step += weight_[u] * serve_window(u, k, trial[u], t, t + len);
      }
      const Seconds next = t + len + intergreen_[j];
      double bound = fixed + step;
      for (std::size_t u = 0; u < unique_.size(); ++u)
        for (std::size_t kk = 0; kk < phases_; ++kk) {
          const QueueState& qs = kk == k ? trial[u] : state[u][kk];
          bound += weight_[u] * relaxed_cost(u, kk, qs, next + offset_[j + 1][kk]);
        }
      children.push_back({bound, len, step});
    }
    std::stable_sort(children.begin(), children.end(),
                     [](const Child& a, const Child& b) { return a.bound < b.bound; });

    for (const Child& ch : children) {
      if (has_incumbent_) {
        if (ch.bound > best_cost_ + tolerance()) break;
        prefix.push_back(ch.length);
        const int lex = compare_prefix(prefix);
        prefix.pop_back();
        if (lex > 0 && ch.bound >= best_cost_ - tolerance()) continue;
      }
      std::vector<QueueState> saved(unique_.size());
      for (std::size_t u = 0; u < unique_.size(); ++u) {
        saved[u] = state[u][k];
        serve_window(u, k, state[u][k], t, t + ch.length);
      }
      prefix.push_back(ch.length);
      dfs(j + 1, t + ch.length + intergreen_[j], state, fixed + ch.step_cost, prefix);
      prefix.pop_back();
      for (std::size_t u = 0; u < unique_.size(); ++u) state[u][k] = saved[u];
      if (aborted_) return;
    }
  }

  const ScheduleProblem& problem_;
  SolveLimits limits_;
  SlotBounds bounds_;
  std::size_t phases_ = 0;
  std::size_t slots_ = 0;
  std::vector<Seconds> intergreen_;
  std::vector<const InflowSample*> unique_;
  std::vector<double> weight_;
  double weight_total_ = 1.0;
  std::vector<std::vector<std::vector<GridCluster>>> grid_;
  std::vector<std::vector<Seconds>> offset_;

  std::vector<Seconds> best_;
  double best_cost_ = std::numeric_limits<double>::infinity();
  bool has_incumbent_ = false;
  std::int64_t nodes_ = 0;
  bool aborted_ = false;
  std::chrono::steady_clock::time_point started_;
};

}  // namespace detail

/// Minimizes mean weighted delay over the problem's samples. A feasible warm
/// start seeds the incumbent, so the result is never worse than it.
inline Solution solve(const ScheduleProblem& problem, const SolveLimits& limits,
                      const std::optional<SignalTimingPlan>& warm_start = std::nullopt) {
  validate_problem(problem);
  const auto t0 = std::chrono::steady_clock::now();
  Solution sol;
  const auto& pm = problem.phase_model;
  const Phase& current = pm[problem.initial.current_phase];
  if (problem.initial.elapsed_green > current.g_max) {
    sol.status = SolveStatus::infeasible;
    sol.diagnostics = "elapsed green exceeds g_max of the current phase";
    return sol;
  }
  if (!(limits.time_limit > 0.0)) throw std::invalid_argument("time_limit must be positive");

  detail::PlanSearch search(problem, limits);
  const SlotBounds bounds = slot_bounds(problem);
  search.offer(bounds.lo, search.plan_cost(bounds.lo));

  if (warm_start) {
    if (check_plan(*warm_start, pm, problem.initial, problem.now).empty()) {
      sol.stats.warm_start_feasible = true;
      const auto lengths = warm_start->lengths();
      const double c = search.plan_cost(lengths);
      sol.stats.warm_start_objective = c / search.weight_total();
      search.offer(lengths, c);
    }
  }

  const bool exhausted = search.run();
  sol.plan = make_plan(pm, problem.initial, problem.now, problem.horizon_cycles, search.best());
  sol.schedules = dispatch_all(sol.plan, problem);
  sol.objective = problem.samples.empty() ? 0.0 : search.best_cost() / search.weight_total();
  sol.status = exhausted ? SolveStatus::optimal : SolveStatus::feasible;
  sol.stats.nodes = search.nodes();
  sol.stats.unique_samples = search.unique_samples();
  sol.stats.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return sol;
}

/// Exhaustive enumeration of every plan on the integer grid. Ties go to the
/// lexicographically smallest vector of interval lengths.
inline Solution brute_force_oracle(const ScheduleProblem& problem, double max_plans = 1e7) {
  validate_problem(problem);
  const SlotBounds b = slot_bounds(problem);
  Solution sol;
  if (problem.initial.elapsed_green > problem.phase_model[problem.initial.current_phase].g_max) {
    sol.status = SolveStatus::infeasible;
    sol.diagnostics = "elapsed green exceeds g_max of the current phase";
    return sol;
  }
  double plans = 1.0;
  for (std::size_t j = 0; j < b.lo.size(); ++j) plans *= static_cast<double>(b.hi[j] - b.lo[j] + 1);
  if (plans > max_plans) throw std::length_error("instance too large for enumeration");

  std::vector<Seconds> lengths = b.lo;
  std::optional<SignalTimingPlan> best;
  double best_obj = std::numeric_limits<double>::infinity();
  std::int64_t evaluated = 0;
  // Odometer over length vectors in lexicographic order; strict improvement
  // keeps the lexicographically first minimizer.
  for (bool more = true; more;) {
    auto plan = make_plan(problem.phase_model, problem.initial, problem.now, problem.horizon_cycles, lengths);
    const double obj = mean_dispatch_delay(plan, problem);
    ++evaluated;
    if (obj < best_obj) {
      best_obj = obj;
      best = std::move(plan);
    }
    more = false;
    for (std::size_t j = lengths.size(); j-- > 0;) {
      if (lengths[j] < b.hi[j]) {
        ++lengths[j];
        more = true;
        break;
      }
      lengths[j] = b.lo[j];
    }
  }
  sol.plan = *best;
  sol.schedules = dispatch_all(sol.plan, problem);
  sol.objective = best_obj;
  sol.status = SolveStatus::optimal;
  sol.stats.nodes = evaluated;
  return sol;
}

/// Moves the previous decision's plan to the current decision time: elapsed
/// intervals are dropped, the running interval is pinned to start at
/// now - elapsed_green and the horizon is refilled with minimal cycles.
/// Returns nullopt when the shifted plan breaks any plan invariant.
inline std::optional<SignalTimingPlan> guided_search_shift(const SignalTimingPlan& previous, const PhaseModel& pm,
                                                           Seconds elapsed, const InitialConditions& now_initial,
                                                           Seconds now) {
  if (elapsed < 0) throw std::invalid_argument("elapsed must be >= 0");
  const std::size_t p = pm.size();
  if (previous.intervals.empty() || p == 0) return std::nullopt;
  std::size_t idx = previous.intervals.size();
  for (std::size_t j = 0; j < std::min(p, previous.intervals.size()); ++j)
    if (previous.intervals[j].phase == now_initial.current_phase) {
      idx = j;
      break;
    }
  if (idx == previous.intervals.size()) return std::nullopt;

  SignalTimingPlan out;
  out.horizon_cycles = previous.horizon_cycles;
  for (std::size_t j = idx; j < previous.intervals.size(); ++j) {
    PhaseInterval iv = previous.intervals[j];
    iv.cycle = (j - idx) / p;
    out.intervals.push_back(iv);
  }
  out.intervals.front().start = now - now_initial.elapsed_green;
  while (out.intervals.size() < p * out.horizon_cycles) {
    const auto& last = out.intervals.back();
    const std::size_t k = (last.phase + 1) % p;
    const Seconds s = last.end + pm[last.phase].intergreen;
    out.intervals.push_back({k, out.intervals.size() / p, s, s + pm[k].g_min});
  }
  if (!check_plan(out, pm, now_initial, now).empty()) return std::nullopt;
  return out;
}

inline DecisionAction decide_action(const Solution& solution, Seconds now, Seconds resolution = 1) {
  if (solution.status == SolveStatus::infeasible || solution.plan.intervals.empty())
    throw std::invalid_argument("decide_action needs a feasible solution");
  const Seconds end = solution.plan.intervals.front().end;
  if (end <= now) return Terminate{};
  return Extend{std::min(resolution, end - now)};
}

/// Independent feasibility check of a plan and its cluster schedule against
/// the full constraint set: green bounds, chaining, initial conditions,
/// fragment lengths and sums, arrival, containment and same-phase FIFO.
inline std::vector<Violation> check_solution(const ScheduleProblem& problem, const Solution& solution) {
  auto out = check_plan(solution.plan, problem.phase_model, problem.initial, problem.now);
  const Seconds hend = horizon_end(solution.plan, problem.phase_model);
  auto fail = [&](std::size_t s, std::size_t k, std::size_t q, std::string rule) {
    out.push_back({"sample " + std::to_string(s) + " phase " + std::to_string(k) + " cluster " + std::to_string(q),
                   std::move(rule)});
  };

  struct Span {
    Seconds first_start = std::numeric_limits<Seconds>::max();
    Seconds last_end = std::numeric_limits<Seconds>::min();
    std::size_t min_cycle = std::numeric_limits<std::size_t>::max();
    std::size_t max_cycle = 0;
    Seconds total = 0;
    std::vector<std::size_t> cycles;
  };
  std::vector<std::vector<std::vector<Span>>> spans(problem.samples.size());
  for (std::size_t s = 0; s < problem.samples.size(); ++s) {
    spans[s].resize(problem.samples[s].per_phase.size());
    for (std::size_t k = 0; k < spans[s].size(); ++k) spans[s][k].resize(problem.samples[s].per_phase[k].size());
  }

  for (const auto& f : solution.schedules.fragments) {
    if (f.sample >= problem.samples.size() || f.phase >= problem.samples[f.sample].per_phase.size() ||
        f.cluster >= problem.samples[f.sample].per_phase[f.phase].size()) {
      out.push_back({"fragment", "dangling cluster reference"});
      continue;
    }
    const GridCluster c = to_grid(problem.samples[f.sample].per_phase[f.phase][f.cluster], problem.now);
    if (f.length < 1 || f.length > c.length) fail(f.sample, f.phase, f.cluster, "fragment length outside [1, l]");
    if (f.start < c.arrival) fail(f.sample, f.phase, f.cluster, "fragment starts before cluster arrival");
    if (f.overflow) {
      if (f.cycle != solution.plan.horizon_cycles) fail(f.sample, f.phase, f.cluster, "overflow fragment cycle");
      if (f.start < hend) fail(f.sample, f.phase, f.cluster, "overflow fragment starts inside the horizon");
    } else {
      const PhaseInterval* iv = solution.plan.find(f.phase, f.cycle);
      if (iv == nullptr) {
        fail(f.sample, f.phase, f.cluster, "fragment cycle has no phase interval");
      } else if (f.start < iv->start || f.start + f.length > iv->end) {
        fail(f.sample, f.phase, f.cluster, "fragment outside its phase interval");
      }
    }
    Span& sp = spans[f.sample][f.phase][f.cluster];
    sp.first_start = std::min(sp.first_start, f.start);
    sp.last_end = std::max(sp.last_end, f.start + f.length);
    sp.min_cycle = std::min(sp.min_cycle, f.cycle);
    sp.max_cycle = std::max(sp.max_cycle, f.cycle);
    sp.total += f.length;
    if (std::find(sp.cycles.begin(), sp.cycles.end(), f.cycle) != sp.cycles.end())
      fail(f.sample, f.phase, f.cluster, "two fragments in one cycle");
    sp.cycles.push_back(f.cycle);
  }

  for (std::size_t s = 0; s < spans.size(); ++s)
    for (std::size_t k = 0; k < spans[s].size(); ++k)
      for (std::size_t q = 0; q < spans[s][k].size(); ++q) {
        const GridCluster c = to_grid(problem.samples[s].per_phase[k][q], problem.now);
        const Span& sp = spans[s][k][q];
        if (sp.total != c.length) fail(s, k, q, "fragment lengths do not sum to the cluster length");
        if (q > 0) {
          const Span& prev = spans[s][k][q - 1];
          if (sp.first_start < prev.last_end) fail(s, k, q, "starts before its predecessor has departed");
          if (prev.max_cycle > sp.min_cycle) fail(s, k, q, "predecessor occupies a later cycle");
        }
      }
  return out;
}

// Line-oriented debug format:
//   problem <now> <current_phase> <elapsed_green> <horizon_cycles>
//   phase <k> <g_min> <g_max> <intergreen>
//   sample <s>
//   cluster <phase> <count> <arrival> <length>
//   end

inline void write_problem(std::ostream& os, const ScheduleProblem& p) {
  os.precision(17);
  os << "problem " << p.now << ' ' << p.initial.current_phase << ' ' << p.initial.elapsed_green << ' '
     << p.horizon_cycles << '\n';
  for (std::size_t k = 0; k < p.phase_model.size(); ++k) {
    const auto& ph = p.phase_model[k];
    os << "phase " << k << ' ' << ph.g_min << ' ' << ph.g_max << ' ' << ph.intergreen << '\n';
  }
  for (std::size_t s = 0; s < p.samples.size(); ++s) {
    os << "sample " << s << '\n';
    for (std::size_t k = 0; k < p.samples[s].per_phase.size(); ++k)
      for (const auto& c : p.samples[s].per_phase[k])
        os << "cluster " << k << ' ' << c.count << ' ' << c.arrival << ' ' << c.length << '\n';
  }
  os << "end\n";
}

inline ScheduleProblem read_problem(std::istream& is) {
  ScheduleProblem p;
  std::string line;
  while (std::getline(is, line)) {
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag)) continue;
    if (tag == "problem") {
      ls >> p.now >> p.initial.current_phase >> p.initial.elapsed_green >> p.horizon_cycles;
    } else if (tag == "phase") {
      std::size_t k;
      Phase ph;
      ls >> k >> ph.g_min >> ph.g_max >> ph.intergreen;
      if (k != p.phase_model.phases.size()) throw std::runtime_error("phases must be listed in order");
      p.phase_model.phases.push_back(ph);
    } else if (tag == "sample") {
      p.samples.emplace_back().per_phase.resize(p.phase_model.size());
    } else if (tag == "cluster") {
      std::size_t k;
      Cluster c;
      ls >> k >> c.count >> c.arrival >> c.length;
      if (p.samples.empty() || k >= p.phase_model.size()) throw std::runtime_error("malformed cluster line");
      p.samples.back().per_phase[k].push_back(c);
    } else if (tag == "end") {
      break;
    } else {
      throw std::runtime_error("unknown record '" + tag + "'");
    }
    if (ls.fail()) throw std::runtime_error("malformed line: " + line);
  }
  return p;
}

//   solution <status> <objective>
//   interval <phase> <cycle> <start> <end>
//   fragment <sample> <phase> <cluster> <cycle> <start> <length> <overflow>
inline void write_solution(std::ostream& os, const Solution& s) {
  os.precision(17);
  os << "solution " << to_string(s.status) << ' ' << s.objective << '\n';
  for (const auto& iv : s.plan.intervals)
    os << "interval " << iv.phase << ' ' << iv.cycle << ' ' << iv.start << ' ' << iv.end << '\n';
  for (const auto& f : s.schedules.fragments)
    os << "fragment " << f.sample << ' ' << f.phase << ' ' << f.cluster << ' ' << f.cycle << ' ' << f.start << ' '
       << f.length << ' ' << (f.overflow ? 1 : 0) << '\n';
  os << "end\n";
}

}  // namespace tuseract
