#include "fcg/serialize.hpp"

#include "fcg/errors.hpp"

namespace fcg {

nlohmann::json op_to_json(const PerturbationOp& op) {
    nlohmann::json j;
    j["op"] = op_name(op);
    if (const auto* o = std::get_if<AddNodeOp>(&op)) {
        j["caller"] = o->caller;
        j["new_id"] = o->new_id;
    } else if (const auto* o = std::get_if<AddEdgeOp>(&op)) {
        j["caller"] = o->caller;
        j["callee"] = o->callee;
    } else if (const auto* o = std::get_if<RewireOp>(&op)) {
        j["caller"] = o->caller;
        j["callee"] = o->callee;
        j["mid"] = o->mid;
    } else if (const auto* o = std::get_if<RemoveNodeOp>(&op)) {
        j["target"] = o->target;
    } else if (const auto* o = std::get_if<AddSparseNodesOp>(&op)) {
        j["anchor"] = o->anchor;
        j["new_ids"] = o->new_ids;
    } else if (const auto* o = std::get_if<AddDenseNodesOp>(&op)) {
        j["anchor"] = o->anchor;
        j["new_ids"] = o->new_ids;
    } else {
        const auto& le = std::get<AddLongEdgesOp>(op);
        j["source"] = le.source;
        j["target"] = le.target;
        j["chain_len"] = le.chain_len;
        j["new_ids"] = le.new_ids;
    }
    return j;
}

PerturbationOp op_from_json(const nlohmann::json& j) {
    try {
        const std::string name = j.at("op").get<std::string>();
        if (name == "add_node") {
            return AddNodeOp{j.at("caller").get<NodeId>(), j.at("new_id").get<NodeId>()};
        }
        if (name == "add_edge") {
            return AddEdgeOp{j.at("caller").get<NodeId>(), j.at("callee").get<NodeId>()};
        }
        if (name == "rewire") {
            return RewireOp{j.at("caller").get<NodeId>(), j.at("callee").get<NodeId>(),
                            j.at("mid").get<NodeId>()};
        }
        if (name == "remove_node") {
            return RemoveNodeOp{j.at("target").get<NodeId>()};
        }
        if (name == "add_sparse_nodes") {
            return AddSparseNodesOp{j.at("anchor").get<NodeId>(),
                                    j.at("new_ids").get<std::vector<NodeId>>()};
        }
        if (name == "add_dense_nodes") {
            return AddDenseNodesOp{j.at("anchor").get<NodeId>(),
                                   j.at("new_ids").get<std::vector<NodeId>>()};
        }
        if (name == "add_long_edges") {
            return AddLongEdgesOp{j.at("source").get<NodeId>(), j.at("target").get<NodeId>(),
                                  j.at("chain_len").get<std::size_t>(),
                                  j.at("new_ids").get<std::vector<NodeId>>()};
        }
        throw ParseError("unknown op \"" + name + "\"");
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(e.what());
    }
}

nlohmann::json individual_to_json(const Individual& ind) {
    nlohmann::json subs = nlohmann::json::array();
    for (const SubSequence& sub : ind.sub_sequences) {
        nlohmann::json ops = nlohmann::json::array();
        for (const PerturbationOp& op : sub.ops) ops.push_back(op_to_json(op));
        subs.push_back(std::move(ops));
    }
    return subs;
}

Individual individual_from_json(const nlohmann::json& j) {
    Individual ind;
    try {
        for (const auto& sub_json : j) {
            SubSequence sub;
            for (const auto& op_json : sub_json) {
                sub.ops.push_back(op_from_json(op_json));
            }
            sub.recompute_footprint();
            ind.sub_sequences.push_back(std::move(sub));
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(e.what());
    }
    return ind;
}

} // namespace fcg
