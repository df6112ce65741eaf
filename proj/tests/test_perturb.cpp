#include <doctest.h>

#include <algorithm>
#include <set>
#include <sstream>

#include "fcg/errors.hpp"
#include "fcg/perturb.hpp"
#include "support/test_util.hpp"

using namespace fcg;

namespace {

// Independent set-algebra view of a graph and of each operator's post
// condition; compared element-wise against the real implementation.
struct SetGraph {
    std::set<NodeId> nodes;
    std::set<Edge> edges;
};

SetGraph to_sets(const FunctionCallGraph& g) {
    SetGraph s;
    for (const auto& [id, rec] : g.nodes()) {
        (void)rec;
        s.nodes.insert(id);
    }
    for (const Edge& e : g.sorted_edges()) s.edges.insert(e);
    return s;
}

SetGraph oracle_apply(const SetGraph& pre, const PerturbationOp& op) {
    SetGraph post = pre;
    if (const auto* o = std::get_if<AddNodeOp>(&op)) {
        post.nodes.insert(o->new_id);
        post.edges.insert({o->caller, o->new_id});
    } else if (const auto* o = std::get_if<AddEdgeOp>(&op)) {
        post.edges.insert({o->caller, o->callee});
    } else if (const auto* o = std::get_if<RewireOp>(&op)) {
        post.edges.erase({o->caller, o->callee});
        post.edges.insert({o->caller, o->mid});
        post.edges.insert({o->mid, o->callee});
    } else if (const auto* o = std::get_if<RemoveNodeOp>(&op)) {
        std::set<NodeId> callers, callees;
        for (const Edge& e : pre.edges) {
            if (e.callee == o->target) callers.insert(e.caller);
            if (e.caller == o->target) callees.insert(e.callee);
        }
        for (NodeId h : callers) post.edges.erase({h, o->target});
        for (NodeId c : callees) post.edges.erase({o->target, c});
        post.nodes.erase(o->target);
        for (NodeId h : callers) {
            for (NodeId c : callees) {
                if (h != c) post.edges.insert({h, c});
            }
        }
    } else if (const auto* o = std::get_if<AddSparseNodesOp>(&op)) {
        for (NodeId id : o->new_ids) {
            post.nodes.insert(id);
            post.edges.insert({o->anchor, id});
        }
    } else if (const auto* o = std::get_if<AddDenseNodesOp>(&op)) {
        for (NodeId id : o->new_ids) {
            post.nodes.insert(id);
            post.edges.insert({o->anchor, id});
        }
        for (std::size_t i = 0; i < o->new_ids.size(); ++i) {
            for (std::size_t j = i + 1; j < o->new_ids.size(); ++j) {
                post.edges.insert({o->new_ids[i], o->new_ids[j]});
            }
        }
    } else {
        const auto& le = std::get<AddLongEdgesOp>(op);
        for (std::size_t chain = 0; chain < le.chains(); ++chain) {
            const NodeId* ids = &le.new_ids[chain * le.chain_len];
            for (std::size_t i = 0; i < le.chain_len; ++i) post.nodes.insert(ids[i]);
            post.edges.insert({le.source, ids[0]});
            for (std::size_t i = 0; i + 1 < le.chain_len; ++i) {
                post.edges.insert({ids[i], ids[i + 1]});
            }
            post.edges.insert({ids[le.chain_len - 1], le.target});
        }
    }
    return post;
}

// Random graph with a non-empty critical area suitable for random_op.
struct AreaFixture {
    FunctionCallGraph graph;
    SensitiveApiIndex apis;
    CriticalArea area;
};

AreaFixture make_area_fixture(Rng& rng, std::size_t max_nodes = 40) {
    for (int attempt = 0; attempt < 100; ++attempt) {
        fcgtest::GraphGenOptions opt;
        opt.max_nodes = max_nodes;
        opt.system_frac = 0.3;
        opt.edge_factor = 2.0;
        FunctionCallGraph g = fcgtest::random_graph(rng, opt);
        SensitiveApiIndex apis = fcgtest::sample_api_index(g, rng, 0.7, 1);
        CriticalArea area = identify_critical_area(g, apis);
        bool has_user = false;
        for (NodeId id : area.node_ids) {
            if (g.is_user_node(id)) {
                has_user = true;
                break;
            }
        }
        if (!area.empty() && has_user) {
            return {std::move(g), std::move(apis), std::move(area)};
        }
    }
    throw std::logic_error("could not build an area fixture");
}

std::set<std::pair<NodeId, std::string>> system_multiset(const FunctionCallGraph& g) {
    std::set<std::pair<NodeId, std::string>> out;
    for (const auto& [id, rec] : g.nodes()) {
        if (rec.kind == NodeKind::System) out.emplace(id, rec.label);
    }
    return out;
}

} // namespace

TEST_CASE("add_dense_nodes: k=3 adds 3 nodes and 6 edges") {
    FunctionCallGraph g;
    g.add_node({0, NodeKind::User, "u", false});
    AddDenseNodesOp op{0, {1, 2, 3}};
    REQUIRE(!apply_op(g, op));
    CHECK(g.node_count() == 4);
    CHECK(g.edge_count() == 6); // 3 anchor edges + C(3,2) internal
}

TEST_CASE("add_long_edges: m=1,k=2 adds a length-3 path into the target") {
    FunctionCallGraph g;
    g.add_node({0, NodeKind::User, "u", false});
    g.add_node({1, NodeKind::System, "sys.api.f", false});
    AddLongEdgesOp op{0, 1, 2, {2, 3}};
    REQUIRE(!apply_op(g, op));
    CHECK(g.node_count() == 4);
    CHECK(g.edge_count() == 3);
    CHECK(g.has_edge(0, 2));
    CHECK(g.has_edge(2, 3));
    CHECK(g.has_edge(3, 1));
}

TEST_CASE("remove_node bridges callers to callees") {
    FunctionCallGraph g;
    g.add_node({0, NodeKind::User, "h1", false});
    g.add_node({1, NodeKind::User, "h2", false});
    g.add_node({2, NodeKind::User, "d", false});
    g.add_node({3, NodeKind::User, "c", false});
    g.add_edge(0, 2);
    g.add_edge(1, 2);
    g.add_edge(2, 3);

    const SetGraph expected = oracle_apply(to_sets(g), RemoveNodeOp{2});
    REQUIRE(!apply_op(g, RemoveNodeOp{2}));
    CHECK(to_sets(g).nodes == expected.nodes);
    CHECK(to_sets(g).edges == expected.edges);
    CHECK(g.has_edge(0, 3));
    CHECK(g.has_edge(1, 3));
}

TEST_CASE("apply_sequence: add then remove a node restores the original sets") {
    FunctionCallGraph g;
    g.add_node({0, NodeKind::User, "a", false});
    g.add_node({1, NodeKind::User, "b", false});
    g.add_edge(0, 1);
    const SetGraph before = to_sets(g);

    const std::vector<PerturbationOp> ops{AddNodeOp{0, 2}, RemoveNodeOp{2}};
    auto result = apply_sequence(g, ops);
    REQUIRE(std::holds_alternative<FunctionCallGraph>(result));
    const SetGraph after = to_sets(std::get<FunctionCallGraph>(result));
    CHECK(after.nodes == before.nodes);
    CHECK(after.edges == before.edges);
}

TEST_CASE("apply_sequence: failure reports index and leaves input untouched") {
    FunctionCallGraph g;
    g.add_node({0, NodeKind::User, "a", false});
    const FunctionCallGraph snapshot = g;

    const std::vector<PerturbationOp> ops{RemoveNodeOp{7}};
    auto result = apply_sequence(g, ops);
    REQUIRE(std::holds_alternative<SequenceFailure>(result));
    const auto& failure = std::get<SequenceFailure>(result);
    CHECK(failure.index == 0);
    CHECK(failure.error.kind == ValidityKind::MissingNode);
    CHECK(g == snapshot);

    auto empty = apply_sequence(g, std::vector<PerturbationOp>{});
    REQUIRE(std::holds_alternative<FunctionCallGraph>(empty));
    CHECK(std::get<FunctionCallGraph>(empty) == g);
}

TEST_CASE("use_def: forced element sets") {
    const UseDefSet add = use_def(AddNodeOp{5, 9});
    CHECK(add.defines.nodes == std::set<NodeId>{9});
    CHECK(add.defines.edges == std::set<Edge>{{5, 9}});
    CHECK(add.uses.nodes == std::set<NodeId>{5});
    CHECK(add.kills.nodes.empty());

    const UseDefSet rw = use_def(RewireOp{1, 2, 3});
    CHECK(rw.uses.nodes == std::set<NodeId>{1, 2, 3});
    CHECK(rw.uses.edges == std::set<Edge>{{1, 2}});
    CHECK(rw.defines.edges == std::set<Edge>{{1, 3}, {3, 2}});
    CHECK(rw.kills.edges == std::set<Edge>{{1, 2}});
}

TEST_CASE("has_dependency: creation feeds later removal") {
    CHECK(has_dependency(AddNodeOp{0, 5}, RemoveNodeOp{5}));
    CHECK(!has_dependency(AddNodeOp{0, 5}, AddEdgeOp{1, 2}));
}

TEST_CASE("has_dependency: edge re-creation after a kill is independent") {
    FunctionCallGraph g;
    g.add_node({0, NodeKind::User, "a", false});
    g.add_node({1, NodeKind::User, "d", false});
    g.add_node({2, NodeKind::User, "h", false});
    g.add_edge(0, 1);

    const RewireOp rewire{0, 1, 2};
    const AddEdgeOp readd{0, 1};
    CHECK(!has_dependency(rewire, readd));

    // The replay oracle confirms the pair applies in order.
    auto result = apply_sequence(g, std::vector<PerturbationOp>{rewire, readd});
    CHECK(std::holds_alternative<FunctionCallGraph>(result));
}

TEST_CASE("random (graph, op) pairs match the set-algebra oracle") {
    Rng rng(515);
    const OpWeights weights;
    const OpRanges ranges;
    int applied = 0;
    for (int trial = 0; trial < 2000; ++trial) {
        AreaFixture fx = make_area_fixture(rng);
        const PerturbationOp op = random_op(fx.graph, fx.area, weights, ranges, rng);
        const SetGraph expected = oracle_apply(to_sets(fx.graph), op);
        const auto sys_before = system_multiset(fx.graph);

        FunctionCallGraph g = fx.graph;
        const ApplyContext ctx{&fx.area.anchor_apis};
        REQUIRE(!apply_op(g, op, ctx));
        ++applied;
        CHECK(to_sets(g).nodes == expected.nodes);
        CHECK(to_sets(g).edges == expected.edges);
        CHECK(system_multiset(g) == sys_before); // system multiset invariant
        CHECK_NOTHROW(g.validate());
    }
    CHECK(applied == 2000);
}

TEST_CASE("invalid ops leave the graph bit-identical") {
    Rng rng(616);
    for (int trial = 0; trial < 500; ++trial) {
        AreaFixture fx = make_area_fixture(rng);
        FunctionCallGraph g = fx.graph;
        // Deliberately corrupt references.
        const NodeId missing = g.peek_next_id() + 100;
        std::vector<PerturbationOp> bad{
            AddEdgeOp{missing, 0},
            RemoveNodeOp{missing},
            RewireOp{missing, 0, 1},
            AddNodeOp{missing, missing + 1},
        };
        for (const auto& op : bad) {
            const FunctionCallGraph snapshot = g;
            auto err = apply_op(g, op);
            REQUIRE(err.has_value());
            CHECK(g == snapshot);
        }
    }
}

TEST_CASE("rewire keeps the callee reachable through the mid node") {
    Rng rng(717);
    int rewires = 0;
    for (int trial = 0; trial < 3000 && rewires < 50; ++trial) {
        AreaFixture fx = make_area_fixture(rng);
        OpWeights w;
        w.add_node = w.add_edge = w.remove_node = 0.0;
        w.add_sparse_nodes = w.add_dense_nodes = w.add_long_edges = 0.0;
        w.rewire = 1.0;
        PerturbationOp op;
        try {
            op = random_op(fx.graph, fx.area, w, OpRanges{}, rng);
        } catch (const NoValidOp&) {
            continue;
        }
        const auto& rw = std::get<RewireOp>(op);
        FunctionCallGraph g = fx.graph;
        REQUIRE(!apply_op(g, op));
        CHECK(g.has_edge(rw.caller, rw.mid));
        CHECK(g.has_edge(rw.mid, rw.callee));
        ++rewires;
    }
    CHECK(rewires > 0);
}

TEST_CASE("remove_node refuses to orphan an anchor") {
    FunctionCallGraph g;
    g.add_node({0, NodeKind::User, "u", false});
    g.add_node({1, NodeKind::System, "sys.api.s", false});
    g.add_edge(0, 1);
    const std::set<NodeId> anchors{1};
    const ApplyContext ctx{&anchors};

    auto err = apply_op(g, RemoveNodeOp{0}, ctx);
    REQUIRE(err.has_value());
    CHECK(err->kind == ValidityKind::KindViolation);

    // With a second caller the removal bridges and is allowed.
    g.add_node({2, NodeKind::User, "v", false});
    g.add_edge(2, 0);
    auto ok = apply_op(g, RemoveNodeOp{0}, ctx);
    CHECK(!ok.has_value());
    CHECK(g.has_edge(2, 1));
}

TEST_CASE("random_op: empty area raises, single-user areas avoid rewire") {
    Rng rng(818);
    FunctionCallGraph g;
    g.add_node({0, NodeKind::User, "u", false});
    g.add_node({1, NodeKind::System, "sys.api.s", false});
    g.add_edge(0, 1);
    const SensitiveApiIndex apis({"sys.api.s"});
    const CriticalArea area = identify_critical_area(g, apis);
    REQUIRE(!area.empty());

    CHECK_THROWS_AS(random_op(g, CriticalArea{}, OpWeights{}, OpRanges{}, rng), NoValidOp);

    const ApplyContext ctx{&area.anchor_apis};
    for (int draw = 0; draw < 10000; ++draw) {
        const PerturbationOp op = random_op(g, area, OpWeights{}, OpRanges{}, rng);
        CHECK(!validate_op(g, op, ctx)); // generator never emits invalid ops
        CHECK(!std::holds_alternative<RewireOp>(op));
        CHECK(!std::holds_alternative<RemoveNodeOp>(op));
    }
}

TEST_CASE("random_op honors all-zero-except weights") {
    Rng rng(919);
    AreaFixture fx = make_area_fixture(rng);
    OpWeights w;
    w.add_node = w.rewire = w.remove_node = 0.0;
    w.add_sparse_nodes = w.add_dense_nodes = w.add_long_edges = 0.0;
    w.add_edge = 1.0;
    for (int draw = 0; draw < 200; ++draw) {
        const PerturbationOp op = random_op(fx.graph, fx.area, w, OpRanges{}, rng);
        CHECK(std::holds_alternative<AddEdgeOp>(op));
    }
}

TEST_CASE("script translation: directive counts follow the mapping table") {
    // Mapping table: add_node 2, add_edge 1, rewire 2, remove_node 2,
    // add_sparse_nodes 2k, add_dense_nodes 2k + C(k,2),
    // add_long_edges m(2k + 1).
    auto directive_count = [](const PerturbationOp& op) -> std::size_t {
        if (std::holds_alternative<AddNodeOp>(op)) return 2;
        if (std::holds_alternative<AddEdgeOp>(op)) return 1;
        if (std::holds_alternative<RewireOp>(op)) return 2;
        if (std::holds_alternative<RemoveNodeOp>(op)) return 2;
        if (const auto* o = std::get_if<AddSparseNodesOp>(&op)) return 2 * o->new_ids.size();
        if (const auto* o = std::get_if<AddDenseNodesOp>(&op)) {
            const std::size_t k = o->new_ids.size();
            return 2 * k + k * (k - 1) / 2;
        }
        const auto& le = std::get<AddLongEdgesOp>(op);
        return le.chains() * (2 * le.chain_len + 1);
    };

    const std::string empty_script = translate_to_script({});
    std::size_t header_lines = 0;
    {
        std::istringstream in(empty_script);
        std::string line;
        while (std::getline(in, line)) {
            REQUIRE(!line.empty());
            CHECK(line[0] == '#');
            ++header_lines;
        }
    }
    CHECK(header_lines > 0);

    Rng rng(1020);
    for (int trial = 0; trial < 50; ++trial) {
        AreaFixture fx = make_area_fixture(rng);
        FunctionCallGraph work = fx.graph;
        std::vector<PerturbationOp> ops;
        std::size_t expected = 0;
        for (int i = 0; i < 20; ++i) {
            const PerturbationOp op =
                random_op(work, fx.area, OpWeights{}, OpRanges{}, rng);
            REQUIRE(!apply_op(work, op, ApplyContext{&fx.area.anchor_apis}));
            expected += directive_count(op);
            ops.push_back(op);
        }
        const std::string script = translate_to_script(ops);
        std::istringstream in(script);
        std::string line;
        std::size_t directives = 0;
        while (std::getline(in, line)) {
            if (!line.empty() && line[0] != '#') ++directives;
        }
        CHECK(directives == expected);
    }
}

TEST_CASE("single add_node translates to a create + insert pair") {
    const std::string script = translate_to_script(std::vector<PerturbationOp>{AddNodeOp{0, 7}});
    std::istringstream in(script);
    std::string line;
    std::vector<std::string> directives;
    while (std::getline(in, line)) {
        if (!line.empty() && line[0] != '#') directives.push_back(line);
    }
    REQUIRE(directives.size() == 2);
    CHECK(directives[0].rfind("CREATE_FUNCTION", 0) == 0);
    CHECK(directives[1].rfind("INSERT_CALL", 0) == 0);
}
