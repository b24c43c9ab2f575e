#include <sstream>

#include <nlohmann/json.hpp>

#include "racemode/sim.hpp"

namespace racemode {

namespace {

nlohmann::json vehicle_json(const VehicleState& v) {
  return {{"s", v.s}, {"n", v.n}, {"v", v.v}, {"x", v.x}, {"y", v.y}, {"psi", v.psi}, {"a_long", v.a_long}};
}

}  // namespace

std::string episode_log_jsonl(const EpisodeResult& result) {
  std::ostringstream out;
  for (const auto& rec : result.log) {
    nlohmann::json line;
    line["step"] = rec.step;
    line["t"] = rec.t;
    line["ego"] = vehicle_json(rec.ego);
    auto opp = vehicle_json(rec.opp);
    opp["id"] = rec.opp_id;
    line["opp"] = opp;
    line["action"] = to_string(static_cast<BehaviorMode>(rec.action));
    line["reward"] = rec.reward;
    line["breakdown"] = {{"progress", rec.terms.progress},   {"velocity", rec.terms.velocity},
                         {"lateral", rec.terms.lateral},     {"gap", rec.terms.gap},
                         {"collision", rec.terms.collision}, {"sparse", rec.terms.sparse}};
    line["zone"] = rec.zone;
    line["done"] = rec.done;
    line["outcome"] = to_string(rec.outcome);
    out << line.dump() << '\n';
  }
  return out.str();
}

}  // namespace racemode
