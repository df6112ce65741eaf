#include <doctest.h>

#include <map>
#include <set>

#include "fcg/errors.hpp"
#include "fcg/genome.hpp"
#include "fcg/serialize.hpp"
#include "support/test_util.hpp"

using namespace fcg;

namespace {

struct Fixture {
    FunctionCallGraph graph;
    SensitiveApiIndex apis;
    CriticalArea area;
    GenomeContext ctx;

    Fixture(FunctionCallGraph g, SensitiveApiIndex a) : graph(std::move(g)), apis(std::move(a)) {
        area = identify_critical_area(graph, apis);
        ctx.base = &graph;
        ctx.area = &area;
    }
};

Fixture make_fixture(Rng& rng, std::size_t max_nodes = 40) {
    for (int attempt = 0; attempt < 100; ++attempt) {
        fcgtest::GraphGenOptions opt;
        opt.max_nodes = max_nodes;
        opt.edge_factor = 2.0;
        FunctionCallGraph g = fcgtest::random_graph(rng, opt);
        SensitiveApiIndex apis = fcgtest::sample_api_index(g, rng, 0.7, 1);
        Fixture fx(std::move(g), std::move(apis));
        bool has_user = false;
        for (NodeId id : fx.area.node_ids) {
            if (fx.graph.is_user_node(id)) {
                has_user = true;
                break;
            }
        }
        if (!fx.area.empty() && has_user) return fx;
    }
    throw std::logic_error("could not build genome fixture");
}

// Small two-node base used by the hand-built chain cases.
Fixture tiny_fixture() {
    FunctionCallGraph g;
    g.add_node({0, NodeKind::User, "usr.a", false});
    g.add_node({1, NodeKind::User, "usr.b", false});
    g.add_node({2, NodeKind::System, "sys.api.s", false});
    g.add_edge(0, 1);
    g.add_edge(1, 2);
    return Fixture(std::move(g), SensitiveApiIndex({"sys.api.s"}));
}

} // namespace

TEST_CASE("group_dependencies: dependent pair forms one sub-sequence") {
    Fixture fx = tiny_fixture();
    const std::vector<PerturbationOp> ops{AddNodeOp{0, 3}, RemoveNodeOp{3}};
    const Individual ind = group_dependencies(fx.ctx, ops);
    REQUIRE(ind.sub_sequences.size() == 1);
    CHECK(ind.sub_sequences[0].ops.size() == 2);
}

TEST_CASE("group_dependencies: disjoint ops form singleton sub-sequences") {
    Fixture fx = tiny_fixture();
    const std::vector<PerturbationOp> ops{AddEdgeOp{0, 2}, AddNodeOp{1, 3}};
    const Individual ind = group_dependencies(fx.ctx, ops);
    REQUIRE(ind.sub_sequences.size() == 2);
    CHECK(ind.sub_sequences[0].ops.size() == 1);
    CHECK(ind.sub_sequences[1].ops.size() == 1);
}

TEST_CASE("group_dependencies rejects sequences that do not replay") {
    Fixture fx = tiny_fixture();
    CHECK_THROWS_AS(group_dependencies(fx.ctx, {RemoveNodeOp{99}}), InvalidSequence);
}

TEST_CASE("grouping partitions the sequence and keeps groups independent") {
    Rng rng(11);
    for (int trial = 0; trial < 60; ++trial) {
        Fixture fx = make_fixture(rng);
        const std::size_t n_ops = 1 + rng.uniform_index(50);
        Individual ind;
        try {
            ind = init_individual(fx.ctx, n_ops, rng);
        } catch (const NoValidOp&) {
            continue;
        }

        CHECK(ind.op_count() == n_ops);
        CHECK(replays_cleanly(fx.ctx, ind));

        // Pairwise footprint independence across groups, both directions.
        for (std::size_t i = 0; i < ind.sub_sequences.size(); ++i) {
            for (std::size_t j = 0; j < ind.sub_sequences.size(); ++j) {
                if (i == j) continue;
                for (const PerturbationOp& a : ind.sub_sequences[i].ops) {
                    for (const PerturbationOp& b : ind.sub_sequences[j].ops) {
                        CHECK(!has_dependency(a, b));
                    }
                }
            }
        }
    }
}

TEST_CASE("init_individual: zero ops is a legal empty individual") {
    Rng rng(13);
    Fixture fx = make_fixture(rng);
    const Individual ind = init_individual(fx.ctx, 0, rng);
    CHECK(ind.empty());
    CHECK(ind.op_count() == 0);
    CHECK(replays_cleanly(fx.ctx, ind));
}

TEST_CASE("init_individual: large sequences replay cleanly and are seed-stable") {
    Rng rng(17);
    Fixture fx = make_fixture(rng, 100);

    Rng a(12345), b(12345);
    const Individual ia = init_individual(fx.ctx, 300, a);
    const Individual ib = init_individual(fx.ctx, 300, b);
    CHECK(ia.op_count() == 300);
    CHECK(replays_cleanly(fx.ctx, ia));
    CHECK(individual_to_json(ia).dump() == individual_to_json(ib).dump());
}

TEST_CASE("crossover of node-adding parents needs zero repairs") {
    Rng rng(19);
    Fixture fx = make_fixture(rng);
    fx.ctx.weights.add_edge = 0.0;
    fx.ctx.weights.rewire = 0.0;
    fx.ctx.weights.remove_node = 0.0;
    fx.ctx.weights.add_long_edges = 0.0;

    int trials = 0;
    for (int t = 0; t < 1000; ++t) {
        const Individual x = init_individual(fx.ctx, 12, rng);
        const Individual y = init_individual(fx.ctx, 12, rng);
        const CrossoverResult r = crossover(fx.ctx, x, y, rng);
        CHECK(r.repaired_ops == 0);
        CHECK(replays_cleanly(fx.ctx, r.first));
        CHECK(replays_cleanly(fx.ctx, r.second));
        ++trials;
    }
    CHECK(trials == 1000);
}

TEST_CASE("crossover conserves genes modulo repair and renaming") {
    Rng rng(23);
    Fixture fx = make_fixture(rng);
    for (int t = 0; t < 50; ++t) {
        const Individual x = init_individual(fx.ctx, 20, rng);
        const Individual y = init_individual(fx.ctx, 20, rng);
        const CrossoverResult r = crossover(fx.ctx, x, y, rng);

        for (const Individual* child : {&r.first, &r.second}) {
            CHECK(child->op_count() <= x.op_count() + y.op_count());
            std::map<std::string, long> budget;
            for (const Individual* parent : {&x, &y}) {
                for (const SubSequence& sub : parent->sub_sequences) {
                    for (const PerturbationOp& op : sub.ops) ++budget[op_name(op)];
                }
            }
            for (const SubSequence& sub : child->sub_sequences) {
                for (const PerturbationOp& op : sub.ops) --budget[op_name(op)];
            }
            for (const auto& [name, count] : budget) {
                (void)name;
                CHECK(count >= 0);
            }
        }
    }
}

TEST_CASE("self-crossover children stay valid") {
    Rng rng(29);
    Fixture fx = make_fixture(rng);
    for (int t = 0; t < 100; ++t) {
        const Individual x = init_individual(fx.ctx, 15, rng);
        const CrossoverResult r = crossover(fx.ctx, x, x, rng);
        CHECK(replays_cleanly(fx.ctx, r.first));
        CHECK(replays_cleanly(fx.ctx, r.second));
    }
}

TEST_CASE("mutate: adding into an empty individual yields a valid singleton") {
    Rng rng(31);
    Fixture fx = make_fixture(rng);
    const Individual empty;
    const MutationResult r = mutate(fx.ctx, empty, rng);
    REQUIRE(!r.abandoned);
    CHECK(r.individual.op_count() == 1);
    CHECK(r.individual.sub_sequences.size() == 1);
    CHECK(replays_cleanly(fx.ctx, r.individual));
}

TEST_CASE("mutating a creation/removal pair repairs downstream users") {
    Fixture fx = tiny_fixture();
    const std::vector<PerturbationOp> ops{AddNodeOp{0, 3}, RemoveNodeOp{3}};
    const Individual pair = group_dependencies(fx.ctx, ops);

    bool saw_shrink = false;
    for (std::uint64_t seed = 0; seed < 64; ++seed) {
        Rng rng(seed);
        const MutationResult r = mutate(fx.ctx, pair, rng);
        CHECK(replays_cleanly(fx.ctx, r.individual));
        if (!r.abandoned && r.individual.op_count() < pair.op_count()) saw_shrink = true;
    }
    CHECK(saw_shrink); // some seed removed an op and repair held up
}

TEST_CASE("random mutations always return valid individuals") {
    Rng rng(37);
    int events = 0;
    for (int t = 0; t < 400; ++t) {
        Fixture fx = make_fixture(rng);
        Individual ind = init_individual(fx.ctx, 1 + rng.uniform_index(25), rng);
        for (int m = 0; m < 5; ++m) {
            const MutationResult r = mutate(fx.ctx, ind, rng);
            CHECK(replays_cleanly(fx.ctx, r.individual));
            ind = r.individual;
            ++events;
        }
    }
    CHECK(events == 2000);
}

TEST_CASE("repair is idempotent on clean sequences") {
    Rng rng(41);
    Fixture fx = make_fixture(rng);
    const Individual ind = init_individual(fx.ctx, 20, rng);
    const auto flat = ind.flatten();
    RepairStats stats;
    const auto repaired = repair_sequence(fx.ctx, flat, rng, &stats);
    REQUIRE(repaired.has_value());
    CHECK(*repaired == flat);
    CHECK(stats.retargeted == 0);
    CHECK(stats.deleted == 0);
}

TEST_CASE("repair retargets an op whose reference disappeared") {
    Rng rng(43);
    Fixture fx = make_fixture(rng);
    // An edge whose callee never exists in the replayed state.
    const NodeId missing = fx.graph.peek_next_id() + 50;
    std::vector<PerturbationOp> broken{AddEdgeOp{0, missing}};
    // Caller 0 may not exist either; build from a guaranteed user node.
    NodeId user = 0;
    for (NodeId id : fx.area.node_ids) {
        if (fx.graph.is_user_node(id)) {
            user = id;
            break;
        }
    }
    broken[0] = AddEdgeOp{user, missing};

    RepairStats stats;
    const auto repaired = repair_sequence(fx.ctx, broken, rng, &stats);
    REQUIRE(repaired.has_value());
    CHECK(stats.retargeted + stats.deleted == 1);
    const Individual ind = group_dependencies(fx.ctx, *repaired);
    CHECK(replays_cleanly(fx.ctx, ind));
}

TEST_CASE("delete-only repair empties fully broken sequences") {
    Fixture fx = tiny_fixture();
    fx.ctx.dependency_aware = false;
    Rng rng(47);
    const NodeId missing = 77;
    std::vector<PerturbationOp> broken{AddEdgeOp{0, missing}, RemoveNodeOp{missing}};
    const auto repaired = repair_sequence(fx.ctx, broken, rng, nullptr);
    REQUIRE(repaired.has_value());
    CHECK(repaired->empty());
}

TEST_CASE("dependency-unaware grouping is all singletons") {
    Rng rng(53);
    Fixture fx = make_fixture(rng);
    fx.ctx.dependency_aware = false;
    const Individual ind = init_individual(fx.ctx, 20, rng);
    CHECK(ind.sub_sequences.size() == 20);
    for (const SubSequence& sub : ind.sub_sequences) {
        CHECK(sub.ops.size() == 1);
    }
}

TEST_CASE("individual serialization round trips") {
    Rng rng(59);
    Fixture fx = make_fixture(rng);
    const Individual ind = init_individual(fx.ctx, 25, rng);
    const auto j = individual_to_json(ind);
    const Individual back = individual_from_json(j);
    CHECK(back == ind);
    CHECK(individual_to_json(back).dump() == j.dump());
}
