/*
 Copyright 2026 mechmpc contributors

 Licensed under the Apache License, Version 2.0 (the "License");
 you may not use this file except in compliance with the License.
 You may obtain a copy of the License at

      https://www.apache.org/licenses/LICENSE-2.0

 Unless required by applicable law or agreed to in writing, software
 distributed under the License is distributed on an "AS IS" BASIS,
 WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 See the License for the specific language governing permissions and
 limitations under the License.
*/
#ifndef MECHMPC_TRANSCRIPT_HPP
#define MECHMPC_TRANSCRIPT_HPP

#include <json.hpp>
#include <ostream>
#include <string>
#include <vector>

#include "mechmpc/game_runner.hpp"
#include "mechmpc/message.hpp"

namespace mechmpc {

nlohmann::json message_to_json(const Message& msg);
Message message_from_json(const nlohmann::json& doc);
nlohmann::json trajectory_to_json(const Trajectory& traj);
nlohmann::json fee_to_json(const FeeBreakdown& fee);
nlohmann::json round_record_to_json(const RoundRecord& record);
nlohmann::json mpc_stage_to_json(const MpcStageLog& entry, bool include_messages);

/// Message profiles round-trip through JSON so a learned profile can seed a
/// later verification run.
nlohmann::json profile_to_json(const std::vector<Message>& profile);
std::vector<Message> profile_from_json(const nlohmann::json& doc);

/// Header lines prepended to every output artifact. All lines start with '#';
/// the timestamp sits on its own line so outputs are comparable without it.
struct ArtifactHeader {
  std::string tool_version;
  std::string scenario_hash;
  std::uint64_t seed = 0;
  std::string command_line;
};
void write_header(std::ostream& out, const ArtifactHeader& header);

/// CSV with a header row; numbers are written with 17 significant digits.
void write_csv(std::ostream& out, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows);

void write_mpc_log_csv(std::ostream& out, const MpcLog& log);
void write_mpc_log_jsonl(std::ostream& out, const MpcLog& log);

}  // namespace mechmpc

#endif  // MECHMPC_TRANSCRIPT_HPP
