#pragma once

// JSON/CSV serialization of fits, configurations and Monte Carlo summaries.

#include <iosfwd>
#include <string>

#include <json.hpp>

#include "dcssl/simulation.hpp"
#include "dcssl/ssl.hpp"

namespace dcssl {

/// Library version string baked in at build time.
std::string version();

nlohmann::json to_json(const SimConfig& cfg);
nlohmann::json to_json(const SslConfig& cfg);
nlohmann::json to_json(const AugmentedEstimate& est);
nlohmann::json to_json(const StageDiagnostics& diag);
/// SL/SSL1/SSL2/SSL3 blocks; methods that were not run are marked unavailable.
nlohmann::json to_json(const SslResult& res);
nlohmann::json to_json(const ReplicationRecord& rec);
nlohmann::json to_json(const MCSummary& summary);

/// Fields present in `j` override those of `base`; unknown keys are rejected.
SimConfig sim_config_from_json(const nlohmann::json& j, SimConfig base = {});
SslConfig ssl_config_from_json(const nlohmann::json& j, SslConfig base = {});

/// Table-1 layout: Method,coefficient,Bias,SE,ESE,CP,RE; CP in percent.
/// Leading '#' lines carry the version and the resolved configuration.
void write_summary_csv(const MCSummary& summary, const nlohmann::json& config, std::ostream& out);

}  // namespace dcssl
