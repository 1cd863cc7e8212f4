#include "spp/search.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <deque>
#include <mutex>
#include <set>
#include <thread>

#include "spp/rng.hpp"

namespace spp {

namespace {

// Ascending objective value; ties break toward the earlier-generated
// candidate so rankings are stable and reproducible.
bool better(const CandidateRecord& a, const CandidateRecord& b) {
  if (a.objective_value != b.objective_value)
    return a.objective_value < b.objective_value;
  return a.candidate_id < b.candidate_id;
}

struct ChildSpec {
  std::int64_t parent_id = -1;
  std::string mutator;
  PromptProgram program;
};

void parallel_for(std::size_t n, std::size_t workers,
                  const std::function<void(std::size_t)>& fn) {
  if (n == 0) return;
  workers = std::max<std::size_t>(1, std::min(workers, n));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mu;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (;;) {
        std::size_t i = next.fetch_add(1);
        if (i >= n) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mu);
          if (!first_error) first_error = std::current_exception();
        }
      }
    });
  }
  for (std::thread& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace

const char* strategy_name(Strategy s) {
  switch (s) {
    case Strategy::Beam: return "beam";
    case Strategy::RegularizedEvolution: return "regularized-evolution";
    case Strategy::Bfs: return "bfs";
    case Strategy::Grid: return "grid";
    case Strategy::Random: return "random";
  }
  return "beam";
}

Strategy parse_strategy(const std::string& name) {
  if (name == "beam") return Strategy::Beam;
  if (name == "regularized-evolution") return Strategy::RegularizedEvolution;
  if (name == "bfs") return Strategy::Bfs;
  if (name == "grid") return Strategy::Grid;
  if (name == "random") return Strategy::Random;
  throw std::invalid_argument("unknown strategy: " + name);
}

const CandidateRecord* SearchTrace::selected_record() const {
  return record_by_id(selected);
}

const CandidateRecord* SearchTrace::record_by_id(std::int64_t candidate_id) const {
  if (candidate_id < 0 ||
      candidate_id >= static_cast<std::int64_t>(records.size()))
    return nullptr;
  return &records[static_cast<std::size_t>(candidate_id)];
}

std::vector<std::int64_t> SearchTrace::lineage(std::int64_t candidate_id) const {
  std::vector<std::int64_t> chain;
  for (const CandidateRecord* r = record_by_id(candidate_id); r != nullptr;
       r = record_by_id(r->parent_id))
    chain.push_back(r->candidate_id);
  std::reverse(chain.begin(), chain.end());
  return chain;
}

namespace {

struct LoopState {
  SearchTrace trace;
  BudgetTracker budget;
  Objective objective;  // local copy; NaN floor resolves after init

  explicit LoopState(const SearchConfig& config, const Objective& base)
      : budget(config.budget), objective(base) {}
};

/// Evaluates the first-k creation-order prefix of `specs` that the budget
/// admits, in parallel, merging records in creation order; commits the cache
/// afterwards (the generation barrier).
std::vector<std::int64_t> evaluate_admitted(LoopState& state, SearchEnv& env,
                                            const SearchConfig& config,
                                            std::vector<ChildSpec>& specs,
                                            std::int64_t generation) {
  std::size_t admitted = 0;
  while (admitted < specs.size() && state.budget.try_consume()) ++admitted;

  std::vector<CandidateRecord> results(admitted);
  parallel_for(admitted, config.workers, [&](std::size_t i) {
    results[i] = evaluate_candidate(specs[i].program, *env.table, *env.backend,
                                    env.cache, config.batch_size,
                                    state.objective, config.retry_backoff_ms);
  });

  std::vector<std::int64_t> ids;
  ids.reserve(admitted);
  const std::int64_t base_id =
      static_cast<std::int64_t>(state.trace.records.size());
  for (std::size_t i = 0; i < admitted; ++i) {
    CandidateRecord& r = results[i];
    r.candidate_id = base_id + static_cast<std::int64_t>(i);
    r.generation = generation;
    r.parent_id = specs[i].parent_id;
    r.mutator = std::move(specs[i].mutator);
    r.eval_index = state.trace.evaluations + static_cast<std::int64_t>(i);
    ids.push_back(r.candidate_id);
    state.trace.records.push_back(std::move(r));
  }
  state.trace.evaluations += static_cast<std::int64_t>(admitted);
  if (env.cache) env.cache->commit();
  return ids;
}

void select_best(SearchTrace& trace) {
  std::int64_t best = -1;
  for (const CandidateRecord& r : trace.records) {
    if (best < 0 || better(r, trace.records[static_cast<std::size_t>(best)]))
      best = r.candidate_id;
  }
  trace.selected = best;
}

}  // namespace

SearchTrace iterative_search(const PromptProgram& seed_program,
                             const MutatorCatalog& catalog, SearchEnv& env,
                             const SearchConfig& config) {
  if (config.budget < 1) throw std::invalid_argument("budget must be ≥ 1");
  if (config.beam_width < 1 || config.population_size < 1 ||
      config.tournament_size < 1 || config.mutators_per_candidate < 1 ||
      config.mutation_arity < 1)
    throw std::invalid_argument("search sizes must be ≥ 1");

  LoopState state(config, env.objective);
  SearchTrace& trace = state.trace;

  // ---- InitCandidates ----
  std::vector<ChildSpec> init_specs;
  if (config.init == InitMode::Induce) {
    MutatorPtr inducer = make_induce_instructions();
    std::size_t n = config.init_candidates ? config.init_candidates
                                           : config.beam_width;
    if (inducer->applicable(seed_program)) {
      ExecutionContext mctx;
      mctx.backend = env.backend;
      mctx.cache = env.cache;
      mctx.backoff_ms = config.retry_backoff_ms;
      try {
        std::vector<MutationOutcome> outcomes =
            inducer->mutate(seed_program, rng::mix(config.seed, 0x1717), n, &mctx);
        for (MutationOutcome& o : outcomes) {
          for (const BackendCall& call : o.calls) {
            if (!call.cache_hit) {
              trace.mutation_input_tokens += call.input_tokens;
              trace.mutation_output_tokens += call.output_tokens;
            }
          }
          init_specs.push_back({-1, o.mutator, std::move(o.child)});
        }
      } catch (const BackendError& e) {
        std::fprintf(stderr, "warning: induction init failed (%s); starting from the seed program\n",
                     e.what());
      }
    }
  }
  if (init_specs.empty()) init_specs.push_back({-1, "", seed_program});

  std::vector<std::int64_t> init_ids =
      evaluate_admitted(state, env, config, init_specs, 0);
  trace.loop_events.push_back({"init", 0, init_ids.size()});
  if (init_ids.empty()) {
    select_best(trace);
    return trace;
  }

  // Resolve a floating accuracy floor against the first evaluated candidate
  // (the seed program under Baseline init), then re-score the init records.
  const CandidateRecord& first =
      trace.records[static_cast<std::size_t>(init_ids.front())];
  trace.baseline_accuracy = first.train_accuracy;
  if (state.objective.kind == ObjectiveKind::MinCostWithAccuracyFloor &&
      !state.objective.has_baseline() && !first.errored) {
    state.objective.baseline_accuracy = first.train_accuracy;
    for (std::int64_t id : init_ids) {
      CandidateRecord& r = trace.records[static_cast<std::size_t>(id)];
      if (r.errored) continue;
      r.feasible = state.objective.feasible(r.train_accuracy);
      r.objective_value =
          state.objective.value(r.train_accuracy, r.weighted_cost);
    }
  }

  // ---- strategy bindings over a shared loop ----
  std::vector<std::int64_t> frontier;     // beam, bfs
  std::deque<std::int64_t> population;    // regularized evolution

  auto best_of = [&](std::vector<std::int64_t> ids, std::size_t keep) {
    std::sort(ids.begin(), ids.end(), [&](std::int64_t a, std::int64_t b) {
      return better(trace.records[static_cast<std::size_t>(a)],
                    trace.records[static_cast<std::size_t>(b)]);
    });
    if (ids.size() > keep) ids.resize(keep);
    return ids;
  };

  std::size_t depth = config.depth_limit;
  if (depth == 0) {
    depth = config.strategy == Strategy::Beam
                ? std::max<std::size_t>(
                      1, static_cast<std::size_t>(config.budget) /
                             (config.beam_width * config.mutators_per_candidate))
                : static_cast<std::size_t>(config.budget);
  }

  std::function<std::vector<std::int64_t>(std::int64_t)> sample_candidates;
  std::function<bool(std::int64_t)> condition =
      [&, depth](std::int64_t generation) {
        return static_cast<std::size_t>(generation) <= depth &&
               state.budget.remaining() > 0;
      };
  std::function<void(const std::vector<std::int64_t>&)> prune;
  std::function<std::vector<std::int64_t>()> active;

  switch (config.strategy) {
    case Strategy::Beam:
      frontier = best_of(init_ids, config.beam_width);
      sample_candidates = [&](std::int64_t) { return frontier; };
      prune = [&](const std::vector<std::int64_t>& new_ids) {
        std::vector<std::int64_t> pool = frontier;
        pool.insert(pool.end(), new_ids.begin(), new_ids.end());
        frontier = best_of(std::move(pool), config.beam_width);
      };
      active = [&] { return frontier; };
      break;
    case Strategy::Bfs:
      frontier = init_ids;
      sample_candidates = [&](std::int64_t) { return frontier; };
      prune = [&](const std::vector<std::int64_t>& new_ids) {
        frontier = new_ids;
      };
      active = [&] { return frontier; };
      break;
    case Strategy::RegularizedEvolution:
      for (std::int64_t id : init_ids) population.push_back(id);
      while (population.size() > config.population_size) population.pop_front();
      sample_candidates = [&](std::int64_t generation) {
        rng::Engine engine(rng::mix(config.seed, generation, 0x70));
        std::size_t k = std::min(config.tournament_size, population.size());
        std::vector<std::size_t> contenders =
            rng::sample_indices(engine, population.size(), k);
        std::int64_t winner = population[contenders.front()];
        for (std::size_t idx : contenders) {
          std::int64_t id = population[idx];
          if (better(trace.records[static_cast<std::size_t>(id)],
                     trace.records[static_cast<std::size_t>(winner)]))
            winner = id;
        }
        return std::vector<std::int64_t>{winner};
      };
      prune = [&](const std::vector<std::int64_t>& new_ids) {
        for (std::int64_t id : new_ids) population.push_back(id);
        while (population.size() > config.population_size)
          population.pop_front();
      };
      active = [&] {
        return std::vector<std::int64_t>(population.begin(), population.end());
      };
      break;
    case Strategy::Grid:
    case Strategy::Random:
      throw std::invalid_argument(
          "enumerative strategies require enumerative_search");
  }

  trace.frontiers.push_back(active());

  // The shared loop body: sample → mutate → evaluate → prune. Strategies may
  // only influence it through the bindings above.
  for (std::int64_t generation = 1; condition(generation); ++generation) {
    std::vector<std::int64_t> parents = sample_candidates(generation);
    trace.loop_events.push_back({"sample", generation, parents.size()});
    if (parents.empty()) break;

    std::vector<ChildSpec> children;
    for (std::int64_t pid : parents) {
      const CandidateRecord& parent =
          trace.records[static_cast<std::size_t>(pid)];
      std::vector<MutatorPtr> mutators;
      try {
        mutators = sample_mutators(catalog, parent.program,
                                   rng::mix(config.seed, generation, pid, 0x51),
                                   config.mutators_per_candidate);
      } catch (const NoApplicableMutators&) {
        continue;
      }
      for (std::size_t j = 0; j < mutators.size(); ++j) {
        ExecutionContext mctx;
        mctx.backend = env.backend;
        mctx.cache = env.cache;
        mctx.backoff_ms = config.retry_backoff_ms;
        try {
          std::vector<MutationOutcome> outcomes = mutators[j]->mutate(
              parent.program, rng::mix(config.seed, generation, pid, j),
              config.mutation_arity, &mctx);
          for (MutationOutcome& o : outcomes) {
            for (const BackendCall& call : o.calls) {
              if (!call.cache_hit) {
                trace.mutation_input_tokens += call.input_tokens;
                trace.mutation_output_tokens += call.output_tokens;
              }
            }
            children.push_back({pid, o.mutator, std::move(o.child)});
          }
        } catch (const BackendError& e) {
          std::fprintf(stderr, "warning: mutation %s on candidate %lld failed: %s\n",
                       mutators[j]->name().c_str(), static_cast<long long>(pid),
                       e.what());
        }
      }
    }
    trace.loop_events.push_back({"mutate", generation, children.size()});
    if (children.empty()) break;

    std::vector<std::int64_t> new_ids =
        evaluate_admitted(state, env, config, children, generation);
    trace.loop_events.push_back({"evaluate", generation, new_ids.size()});
    if (new_ids.empty()) break;

    prune(new_ids);
    std::vector<std::int64_t> now_active = active();
    trace.loop_events.push_back({"prune", generation, now_active.size()});
    trace.frontiers.push_back(std::move(now_active));
  }

  select_best(trace);
  return trace;
}

// ---------------------------------------------------------------------------
// Enumerative search
// ---------------------------------------------------------------------------

std::size_t ChoiceSpace::total_assignments() const {
  std::size_t total = 1;
  for (const ChoiceAxis& axis : axes) total *= axis.values.size();
  return total;
}

ChoiceSpace attribute_grid(std::vector<AttributeAxis> axes) {
  ChoiceSpace space;
  for (const AttributeAxis& a : axes)
    space.axes.push_back({a.name.empty() ? a.attribute : a.name, a.values});
  space.binder = [axes = std::move(axes)](
                     const PromptProgram& program,
                     const std::vector<std::string>& assignment) {
    std::vector<Edit> edits;
    for (std::size_t k = 0; k < axes.size(); ++k) {
      const AttributeAxis& axis = axes[k];
      AttrValue value;
      if (axis.attribute == attr::kExampleCount) {
        value = static_cast<std::int64_t>(std::stoll(assignment[k]));
      } else {
        value = assignment[k];
      }
      for (NodeId id : program.select(axis.selector))
        edits.push_back(ReplaceAttribute{id, axis.attribute, value});
    }
    return edits;
  };
  return space;
}

SearchTrace enumerative_search(const PromptProgram& seed_program,
                               const ChoiceSpace& space, SearchEnv& env,
                               const SearchConfig& config) {
  if (config.budget < 1) throw std::invalid_argument("budget must be ≥ 1");
  if (space.axes.empty()) throw EmptySpace("choice space has no axes");
  for (const ChoiceAxis& axis : space.axes)
    if (axis.values.empty())
      throw EmptySpace("axis '" + axis.name + "' has no values");
  if (!space.binder) throw std::invalid_argument("choice space has no binder");
  if (config.strategy != Strategy::Grid && config.strategy != Strategy::Random)
    throw std::invalid_argument("iterative strategies require iterative_search");

  const std::size_t total = space.total_assignments();
  const std::size_t budget = static_cast<std::size_t>(config.budget);
  if (config.strategy == Strategy::Grid && total > budget &&
      !config.allow_truncation)
    throw TruncationRequired(
        "grid over " + std::to_string(total) + " assignments exceeds budget " +
        std::to_string(config.budget) + "; enable truncation to run a prefix");

  // Assignment <index> in lexicographic order, first axis most significant.
  auto assignment_of = [&](std::size_t index) {
    std::vector<std::string> values(space.axes.size());
    for (std::size_t k = space.axes.size(); k-- > 0;) {
      const std::vector<std::string>& axis = space.axes[k].values;
      values[k] = axis[index % axis.size()];
      index /= axis.size();
    }
    return values;
  };

  std::vector<std::size_t> order;
  if (config.strategy == Strategy::Grid) {
    for (std::size_t i = 0; i < std::min(total, budget); ++i) order.push_back(i);
  } else {
    const std::size_t count = std::min(total, budget);
    if (total <= (std::size_t{1} << 20)) {
      order.resize(total);
      for (std::size_t i = 0; i < total; ++i) order[i] = i;
      rng::Engine engine(rng::mix(config.seed, 0xE7));
      rng::shuffle(engine, order);
      order.resize(count);
    } else {
      rng::Engine engine(rng::mix(config.seed, 0xE7));
      std::set<std::size_t> seen;
      while (order.size() < count) {
        std::size_t pick = rng::below(engine, total);
        if (seen.insert(pick).second) order.push_back(pick);
      }
    }
  }

  LoopState state(config, env.objective);
  std::vector<ChildSpec> specs;
  specs.reserve(order.size());
  for (std::size_t index : order) {
    std::vector<std::string> assignment = assignment_of(index);
    std::string label;
    for (std::size_t k = 0; k < assignment.size(); ++k) {
      if (k) label += ';';
      label += space.axes[k].name + "=" + assignment[k];
    }
    PromptProgram child = seed_program;
    for (const Edit& e : space.binder(seed_program, assignment))
      child = child.apply_edit(e);
    specs.push_back({-1, std::move(label), std::move(child)});
  }

  std::vector<std::int64_t> ids =
      evaluate_admitted(state, env, config, specs, 0);
  state.trace.loop_events.push_back({"enumerate", 0, ids.size()});
  state.trace.frontiers.push_back(ids);
  if (!ids.empty()) {
    state.trace.baseline_accuracy =
        state.trace.records[static_cast<std::size_t>(ids.front())].train_accuracy;
  }
  select_best(state.trace);
  return state.trace;
}

Preset make_preset(const std::string& name) {
  Preset preset;
  preset.name = name;
  if (name == "ape") {
    preset.catalog = {make_paraphrase()};
    preset.config.strategy = Strategy::Beam;
    preset.config.init = InitMode::Induce;
    preset.objective.kind = ObjectiveKind::MaximizeAccuracy;
    return preset;
  }
  if (name == "grips") {
    preset.catalog = phrase_catalog();
    preset.config.strategy = Strategy::Beam;
    preset.config.init = InitMode::Baseline;
    preset.objective.kind = ObjectiveKind::MaximizeAccuracy;
    return preset;
  }
  if (name == "sammo-compress") {
    preset.catalog = full_catalog();
    preset.config.strategy = Strategy::Beam;
    preset.config.init = InitMode::Baseline;
    preset.objective.kind = ObjectiveKind::MinCostWithAccuracyFloor;
    preset.objective.epsilon = 0.02;
    preset.objective.input_weight = 1.0;
    preset.objective.output_weight = 2.0;
    return preset;
  }
  throw UnknownPreset("unknown preset: " + name);
}

}  // namespace spp
