"""Threshold and horizon policies, contention resolution, static baselines."""

import itertools
import math

import numpy as np
import pytest

import demandmatch as dm
from demandmatch.demand import RealizedDemand, iter_demand_support, iter_orders, trial_rng
from demandmatch.experiments import (
    gen_counterexample,
    random_horizon_instance,
    random_indep_instance,
)
from demandmatch.oracles import horizon_policy_value, horizon_policy_value_dp
from demandmatch.policies import (
    HorizonPolicyState,
    ThresholdPolicyState,
    best_static_threshold,
    ocrs_plan,
    plan_horizon_policy,
    plan_horizon_policy_for,
    plan_indep_adv_policy,
    run_horizon_trial,
    static_threshold_policy,
    static_threshold_value,
)
from demandmatch.relaxations import horizon_model_of


def indep_instance(rewards, caps, dists, arrival=dm.Arrival.ADVERSARIAL):
    return dm.Instance(
        rewards=rewards,
        capacities=caps,
        demand=dm.IndepDemandModel(tuple(dists)),
        arrival=arrival,
    )


class TestThresholdPlan:
    def test_single_resource_full_column(self):
        dist = dm.DemandDistribution.point_mass(1)
        inst = indep_instance(((1.0,),), (1,), [dist])
        plan = plan_indep_adv_policy(inst)
        assert plan.x == ((1.0,),)
        assert plan.taus == (0.5,)

    def test_two_stage_reward_hand_lp(self):
        # capacity row x0 + x1 <= 1, dear-type row x1 <= 1/2;
        # maximizing 1*x0 + 2*x1 gives (1/2, 1/2) and threshold 3/4
        inst = gen_counterexample("two_stage_reward", {"eps": 0.5, "k1": 1})
        plan = plan_indep_adv_policy(inst)
        assert plan.lp_value == pytest.approx(1.5, abs=1e-9)
        assert plan.x[0][0] == pytest.approx(0.5, abs=1e-9)
        assert plan.x[0][1] == pytest.approx(0.5, abs=1e-9)
        assert plan.taus[0] == pytest.approx(0.75, abs=1e-9)

    def test_zero_rewards_accept_anything_routed(self):
        dist = dm.DemandDistribution.from_pmf({0: 0.5, 1: 0.5})
        inst = indep_instance(((0.0,), (0.0,)), (1, 1), [dist])
        plan = plan_indep_adv_policy(inst)
        assert plan.taus == (0.0, 0.0)
        assert all(plan.qualifies(i, 0) for i in range(2))

    def test_expands_capacities_internally(self):
        dist = dm.DemandDistribution.point_mass(2)
        inst = indep_instance(((1.0,),), (2,), [dist])
        plan = plan_indep_adv_policy(inst)
        assert plan.n == 2
        assert plan.parent == (0, 0)

    def test_rejects_correlated_demand(self):
        inst = gen_counterexample("rare_long_horizon", {"N": 3})
        with pytest.raises(TypeError):
            plan_indep_adv_policy(inst)


class TestThresholdStep:
    def plan(self):
        dist = dm.DemandDistribution.from_pmf({1: 0.5, 2: 0.5})
        return plan_indep_adv_policy(indep_instance(((1.0,), (1.0,)), (1, 1), [dist]))

    def test_tie_accepts(self):
        plan = self.plan()
        routing = dm.Routing(assignment=(0, None))
        state = ThresholdPolicyState(plan=plan, pis=(routing,))
        # reward equals the threshold at a fresh resource: accepted
        assert plan.instance.rewards[0][0] >= plan.taus[0]
        decision = state.step(0)
        assert decision.resource == 0

    def test_idle_routing_rejects(self):
        plan = self.plan()
        routing = dm.Routing(assignment=(None, 0))
        state = ThresholdPolicyState(plan=plan, pis=(routing,))
        assert state.step(0).resource is None
        assert state.step(0).resource == 0

    def test_taken_resource_rejects_cross_type_collision(self):
        dist = dm.DemandDistribution.point_mass(1)
        inst = indep_instance(((2.0, 3.0),), (1,), [dist, dist])
        plan = plan_indep_adv_policy(inst)
        state = ThresholdPolicyState(
            plan=plan, pis=(dm.Routing((0,)), dm.Routing((0,)))
        )
        first = state.step(1)
        second = state.step(0)
        assert first.resource == 0
        assert second.resource is None
        assert state.collected == 3.0


class TestOcrs:
    def test_two_half_steps(self):
        plan = ocrs_plan([0.5, 0.5], 1)
        assert plan.gamma == pytest.approx(2 / 3, abs=1e-8)
        assert plan.accept_probs[0] == pytest.approx(2 / 3, abs=1e-8)
        # the second step is the binding one: gamma / (1 - gamma/2) = 1
        assert plan.accept_probs[1] == pytest.approx(1.0, abs=1e-8)

    def test_single_certain_step_accepts_outright(self):
        # no contention in a single step, so the whole rate is accepted
        plan = ocrs_plan([1.0], 1)
        assert plan.gamma == pytest.approx(1.0, abs=1e-9)

    def test_four_quarter_steps(self):
        # unit capacity: availability is 1 - gamma * (mass before t), so the
        # last step pins gamma at 1 / (1 + 3/4)
        plan = ocrs_plan([0.25] * 4, 1)
        assert plan.gamma == pytest.approx(4 / 7, abs=1e-8)

    def test_capacity_two_saturated(self):
        plan = ocrs_plan([1.0, 1.0], 2)
        assert plan.gamma == pytest.approx(1.0, abs=1e-9)
        assert plan.gamma >= 1 - 1 / math.sqrt(5) - 1e-9

    def test_budget_violation_rejected(self):
        with pytest.raises(ValueError, match="capacity"):
            ocrs_plan([0.7, 0.7], 1)

    @pytest.mark.parametrize("k", [1, 2, 3, 5, 8, 13, 20])
    def test_floor_on_random_saturated_schedules(self, k):
        floor = 1 - 1 / math.sqrt(k + 3)
        for trial in range(20):
            rng = trial_rng(1300 + k, trial)
            steps = int(rng.integers(max(2, k), 4 * k + 2))
            raw = rng.uniform(0.05, 1.0, size=steps)
            rates = raw * (k / raw.sum())  # fully saturated budget
            rates = np.minimum(rates, 1.0)
            plan = ocrs_plan(rates.tolist(), k)
            assert plan.gamma >= floor - 1e-9

    @pytest.mark.parametrize("trial", range(30))
    def test_uniform_acceptance_promise(self, trial):
        """Each step's unconditional acceptance equals gamma times its rate."""
        rng = trial_rng(1400, trial)
        k = int(rng.integers(1, 5))
        steps = int(rng.integers(1, 9))
        raw = rng.uniform(0.0, 1.0, size=steps)
        budget = rng.uniform(0.2, 1.0) * k
        scale = min(1.0, budget / max(raw.sum(), 1e-12))
        rates = np.minimum(raw * scale, 1.0)
        plan = ocrs_plan(rates.tolist(), k)
        # replay the accepted-count law and compare per-step acceptance
        counts = [1.0] + [0.0] * k
        for t, y in enumerate(plan.rates):
            available = 1.0 - counts[k]
            assert available == pytest.approx(plan.availability[t], abs=1e-12)
            accept = y * available * plan.accept_probs[t]
            assert accept == pytest.approx(plan.gamma * y, abs=1e-9)
            hazard = y * plan.accept_probs[t]
            nxt = [0.0] * (k + 1)
            for a in range(k + 1):
                nxt[a] = counts[a] * (1.0 - hazard) if a < k else counts[a]
                if a > 0:
                    nxt[a] += counts[a - 1] * hazard
            counts = nxt


class TestHorizonPolicy:
    def test_deterministic_single_step(self):
        model = dm.StochasticHorizonModel(
            total=dm.DemandDistribution.point_mass(1), probs=((1.0,),)
        )
        inst = dm.Instance(
            rewards=((5.0,),), capacities=(1,), demand=model, arrival=dm.Arrival.RANDOM_ORDER
        )
        plan = plan_horizon_policy(model, inst)
        assert plan.lp_value == pytest.approx(5.0, abs=1e-9)
        assert plan.plans[0].gamma == pytest.approx(1.0, abs=1e-9)
        assert horizon_policy_value(plan).value == pytest.approx(5.0, abs=1e-9)

    def test_routing_ratios_are_probabilities(self):
        inst = gen_counterexample("rare_long_horizon", {"N": 3})
        plan = plan_horizon_policy_for(inst)
        for t in range(1, plan.horizon + 1):
            for j in range(plan.instance.m):
                total = sum(
                    plan.routing_prob(t, i, j) for i in range(plan.instance.n)
                )
                assert -1e-12 <= total <= 1.0 + 1e-9

    def test_zero_rewards_collects_nothing(self):
        model = dm.StochasticHorizonModel(
            total=dm.DemandDistribution.point_mass(2), probs=((1.0,), (1.0,))
        )
        inst = dm.Instance(
            rewards=((0.0,),), capacities=(1,), demand=model, arrival=dm.Arrival.RANDOM_ORDER
        )
        plan = plan_horizon_policy(model, inst)
        assert horizon_policy_value(plan).value == 0.0

    @pytest.mark.parametrize("trial", range(25))
    def test_dp_value_matches_gamma_weighted_objective(self, trial):
        inst = random_horizon_instance(trial_rng(1500, trial), max_horizon=4)
        plan = plan_horizon_policy_for(inst)
        assert horizon_policy_value_dp(plan) == pytest.approx(
            plan.expected_value(), abs=1e-9
        )

    def test_dp_value_matches_full_tree_enumeration(self):
        """Cross-check against exhaustive branching over every arrival,
        routing coin, and acceptance coin."""
        inst = random_horizon_instance(np.random.default_rng(77), max_horizon=3, max_n=2, max_m=2)
        plan = plan_horizon_policy_for(inst)
        model = plan.model

        def walk(t, caps, weight):
            if weight <= 0 or t > plan.horizon:
                return 0.0
            s_t = float(model.total.survival(t))
            row = model.probs[t - 1]
            value = 0.0
            for j in range(plan.instance.m):
                pj = float(row[j])
                if pj <= 0:
                    continue
                reject_mass = 1.0
                for i in range(plan.instance.n):
                    rho = plan.routing_prob(t, i, j)
                    if rho <= 0:
                        continue
                    reject_mass -= rho
                    c = plan.plans[i].accept_probs[t - 1] if caps[i] > 0 else 0.0
                    if c > 0:
                        reduced = caps[:i] + (caps[i] - 1,) + caps[i + 1 :]
                        value += (
                            weight * pj * rho * c
                            * (s_t * float(plan.instance.rewards[i][j]))
                        )
                        value += walk(t + 1, reduced, weight * pj * rho * c)
                    value += walk(t + 1, caps, weight * pj * rho * (1.0 - c))
                value += walk(t + 1, caps, weight * pj * max(reject_mass, 0.0))
            no_query = float(model.no_query_mass(t))
            if no_query > 0:
                value += walk(t + 1, caps, weight * no_query)
            return value

        brute = walk(1, tuple(plan.instance.capacities), 1.0)
        assert horizon_policy_value_dp(plan) == pytest.approx(brute, abs=1e-9)

    def test_per_step_acceptance_monte_carlo(self):
        """Unconditional acceptance at (resource, step) meets the survival-
        discounted floor within Monte-Carlo noise."""
        inst = random_horizon_instance(np.random.default_rng(123), max_horizon=3, max_n=2, max_m=2)
        plan = plan_horizon_policy_for(inst)
        trials = 100_000
        hits = np.zeros((plan.instance.n, plan.horizon))
        for trial in range(trials):
            events: list = []
            run_horizon_trial(plan, trial_rng(31337, trial), trial=trial, trace=events)
            for e in events:
                if e.accepted:
                    hits[e.routed_to, e.step - 1] += 1
        for i in range(plan.instance.n):
            gamma = plan.plans[i].gamma
            for t in range(1, plan.horizon + 1):
                rate = plan.plans[i].rates[t - 1]
                target = float(plan.model.total.survival(t)) * gamma * rate
                observed = hits[i, t - 1] / trials
                se = math.sqrt(max(target * (1 - target), 1e-12) / trials)
                assert observed >= target - 4 * se - 1e-9

    def test_step_asserts_on_impossible_type(self):
        model = dm.StochasticHorizonModel(
            total=dm.DemandDistribution.point_mass(1), probs=((0.5, 0.0),)
        )
        inst = dm.Instance(
            rewards=((1.0, 1.0),), capacities=(1,), demand=model,
            arrival=dm.Arrival.RANDOM_ORDER,
        )
        state = HorizonPolicyState(plan=plan_horizon_policy(model, inst))
        with pytest.raises(AssertionError):
            state.step(1, 1, 0)

    def test_full_ratio_routes_deterministically(self):
        model = dm.StochasticHorizonModel(
            total=dm.DemandDistribution.point_mass(1), probs=((0.7,),)
        )
        inst = dm.Instance(
            rewards=((1.0,),), capacities=(1,), demand=model, arrival=dm.Arrival.RANDOM_ORDER
        )
        plan = plan_horizon_policy(model, inst)
        assert plan.routing_prob(1, 0, 0) == pytest.approx(1.0, abs=1e-9)
        state = HorizonPolicyState(plan=plan)
        decision = state.step(1, 0, 5)
        assert decision.routed_to == 0 and decision.accepted


class TestSamplePathDominance:
    """On every sample path, each resource earns at least the fixed-bar
    payoff computed from the same realized routed rewards."""

    @pytest.mark.parametrize("trial", range(20))
    def test_policy_dominates_prophet_payoff(self, trial):
        inst = random_indep_instance(
            trial_rng(1600, trial), max_n=2, max_m=3, max_support=3, max_value=2,
            max_total_capacity=2,
        )
        plan = plan_indep_adv_policy(inst)
        branch_sets = [plan.routings[j].branches() for j in range(plan.m)]
        for counts, prob in iter_demand_support(inst.demand):
            if float(prob) <= 0:
                continue
            d = RealizedDemand(counts)
            for order in iter_orders(d):
                for combo in itertools.product(*branch_sets):
                    pis = tuple(r for r, _ in combo)
                    state = ThresholdPolicyState(plan=plan, pis=pis)
                    per_resource = [0.0] * plan.n
                    for j in order:
                        decision = state.step(j)
                        if decision.resource is not None:
                            per_resource[decision.resource] += decision.reward
                    for i in range(plan.n):
                        routed_rewards = [
                            plan.instance.rewards[i][j]
                            for j in range(plan.m)
                            if pis[j].rank_of(i) is not None
                            and pis[j].rank_of(i) <= counts[j]
                        ]
                        qualifying = [
                            r for r in routed_rewards if r >= plan.taus[i]
                        ]
                        floor = min(qualifying) if qualifying else 0.0
                        assert per_resource[i] >= floor - 1e-12


class TestTraces:
    def test_horizon_trial_trace_to_csv(self):
        from demandmatch.policies import trace_to_csv

        inst = random_horizon_instance(np.random.default_rng(2), max_horizon=3)
        plan = plan_horizon_policy_for(inst)
        events: list = []
        collected = run_horizon_trial(plan, 99, trial=7, trace=events)
        csv = trace_to_csv(events)
        lines = csv.strip().splitlines()
        assert lines[0] == "trial,step,query_type,rank,routed_to,accepted,reward"
        assert len(lines) == len(events) + 1
        rewards = sum(float(line.split(",")[6]) for line in lines[1:])
        assert rewards == pytest.approx(collected, abs=1e-12)

    def test_step_aliases_match_methods(self):
        from demandmatch.policies import threshold_policy_step

        dist = dm.DemandDistribution.point_mass(1)
        inst = indep_instance(((1.0,),), (1,), [dist])
        plan = plan_indep_adv_policy(inst)
        state = ThresholdPolicyState(plan=plan, pis=(dm.Routing((0,)),))
        assert threshold_policy_step(state, 0).resource == 0


class TestStaticThreshold:
    def test_zero_bar_accepts_first_k(self):
        policy = static_threshold_policy(0.0, 2)
        assert [policy.step(r) for r in (0.0, 1.0, 5.0)] == [True, True, False]

    def test_infinite_bar_accepts_nothing(self):
        policy = static_threshold_policy(float("inf"), 2)
        assert not any(policy.step(r) for r in (1.0, 100.0))

    def test_exact_value_matches_simulation_tree(self):
        model = dm.StochasticHorizonModel(
            total=dm.DemandDistribution.from_pmf({1: 0.4, 2: 0.6}),
            probs=((0.5, 0.5), (0.2, 0.7)),
        )
        inst = dm.Instance(
            rewards=((1.0, 3.0),), capacities=(1,), demand=model,
            arrival=dm.Arrival.RANDOM_ORDER,
        )

        def brute(threshold):
            # enumerate (horizon length, type sequence) outcomes
            total = 0.0
            for counts, prob in [((1,), 0.4), ((2,), 0.6)]:
                horizon = counts[0]
                for seq in itertools.product([0, 1, None], repeat=horizon):
                    w = float(prob)
                    for t, j in enumerate(seq, start=1):
                        row = model.probs[t - 1]
                        w *= float(model.no_query_mass(t)) if j is None else float(row[j])
                    if w <= 0:
                        continue
                    policy = static_threshold_policy(threshold, 1)
                    gained = 0.0
                    for j in seq:
                        if j is not None and policy.step(inst.rewards[0][j]):
                            gained += inst.rewards[0][j]
                    total += w * gained
            return total

        for bar in (0.0, 1.0, 2.0, 3.0, 4.0):
            assert static_threshold_value(model, inst, bar) == pytest.approx(
                brute(bar), abs=1e-12
            )

    def test_escalating_family_bounds(self):
        inst = gen_counterexample("escalating_rewards", {"T": 6, "eps": 0.1})
        model = horizon_model_of(inst)
        bar, value = best_static_threshold(model, inst)
        assert value <= 4.0 + 1e-9
        opt = dm.optimal_online_dp(model, inst).value
        assert opt >= 6 * 0.9**6 - 1e-9
        assert value < opt

    def test_requires_single_resource(self):
        model = dm.StochasticHorizonModel(
            total=dm.DemandDistribution.point_mass(1), probs=((1.0,),)
        )
        inst = dm.Instance(
            rewards=((1.0,), (2.0,)), capacities=(1, 1), demand=model,
            arrival=dm.Arrival.RANDOM_ORDER,
        )
        with pytest.raises(ValueError, match="single-resource"):
            static_threshold_value(model, inst, 1.0)
