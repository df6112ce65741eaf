#ifndef FCG_SERIALIZE_HPP_
#define FCG_SERIALIZE_HPP_

#include <json.hpp>

#include "fcg/genome.hpp"
#include "fcg/perturb.hpp"

namespace fcg {

nlohmann::json op_to_json(const PerturbationOp& op);
PerturbationOp op_from_json(const nlohmann::json& j);

// JSON array of sub-sequences, each an array of op records.
nlohmann::json individual_to_json(const Individual& ind);
Individual individual_from_json(const nlohmann::json& j);

} // namespace fcg

#endif // FCG_SERIALIZE_HPP_
