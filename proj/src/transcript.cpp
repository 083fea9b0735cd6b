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
#include "mechmpc/transcript.hpp"

#include <cmath>

namespace mechmpc {

using nlohmann::json;

namespace {

json matrix_to_json(const Eigen::MatrixXd& m) {
  json arr = json::array();
  for (int r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (int c = 0; c < m.cols(); ++c) {
      const double v = m(r, c);
      if (std::isfinite(v))
        row.push_back(v);
      else
        row.push_back(v > 0 ? "inf" : "-inf");
    }
    arr.push_back(row);
  }
  return arr;
}

Eigen::MatrixXd matrix_from_json(const json& arr) {
  const size_t rows = arr.size();
  const size_t cols = rows ? arr[0].size() : 0;
  Eigen::MatrixXd m(rows, cols);
  for (size_t r = 0; r < rows; ++r)
    for (size_t c = 0; c < cols; ++c) {
      const json& v = arr[r][c];
      if (v.is_string()) {
        m(r, c) = v.get<std::string>() == "inf" ? kInf : -kInf;
      } else {
        m(r, c) = v.get<double>();
      }
    }
  return m;
}

json vector_to_json(const Eigen::VectorXd& v) {
  json arr = json::array();
  for (int i = 0; i < v.size(); ++i) arr.push_back(v(i));
  return arr;
}

}  // namespace

json message_to_json(const Message& msg) {
  json doc;
  doc["state_weights"] = matrix_to_json(msg.state_weights);
  doc["input_weights"] = matrix_to_json(msg.input_weights);
  doc["sensitivity"] = matrix_to_json(msg.sensitivity);
  doc["bounds"] = {{"state_lower", matrix_to_json(msg.bounds.state_lower)},
                   {"state_upper", matrix_to_json(msg.bounds.state_upper)},
                   {"input_lower", matrix_to_json(msg.bounds.input_lower)},
                   {"input_upper", matrix_to_json(msg.bounds.input_upper)}};
  doc["state_ref"] = matrix_to_json(msg.state_ref);
  return doc;
}

Message message_from_json(const json& doc) {
  Message msg;
  msg.state_weights = matrix_from_json(doc.at("state_weights"));
  msg.input_weights = matrix_from_json(doc.at("input_weights"));
  msg.sensitivity = matrix_from_json(doc.at("sensitivity"));
  msg.bounds.state_lower = matrix_from_json(doc.at("bounds").at("state_lower"));
  msg.bounds.state_upper = matrix_from_json(doc.at("bounds").at("state_upper"));
  msg.bounds.input_lower = matrix_from_json(doc.at("bounds").at("input_lower"));
  msg.bounds.input_upper = matrix_from_json(doc.at("bounds").at("input_upper"));
  msg.state_ref = matrix_from_json(doc.at("state_ref"));
  return msg;
}

json trajectory_to_json(const Trajectory& traj) {
  return {{"agent", traj.agent},
          {"states", matrix_to_json(traj.states)},
          {"inputs", matrix_to_json(traj.inputs)}};
}

json fee_to_json(const FeeBreakdown& fee) {
  return {{"externality", fee.externality},
          {"x_mismatch", fee.x_mismatch},
          {"lambda_mismatch", fee.lambda_mismatch},
          {"total", fee.total}};
}

json round_record_to_json(const RoundRecord& record) {
  json doc;
  doc["round"] = record.round;
  doc["status"] = record.status == SolveStatus::optimal
                      ? "optimal"
                      : (record.status == SolveStatus::infeasible ? "infeasible" : "max_iter");
  json msgs = json::array();
  for (const Message& m : record.messages) msgs.push_back(message_to_json(m));
  doc["messages"] = msgs;
  json outcome = json::array();
  for (const Trajectory& t : record.outcome) outcome.push_back(trajectory_to_json(t));
  doc["outcome"] = outcome;
  json fees = json::array();
  for (const FeeBreakdown& f : record.fees) fees.push_back(fee_to_json(f));
  doc["fees"] = fees;
  json refs = json::array();
  for (const Eigen::MatrixXd& r : record.references) refs.push_back(matrix_to_json(r));
  doc["references"] = refs;
  doc["true_costs"] = record.true_costs;
  doc["message_change"] = record.message_change;
  doc["exclusion_fallback"] = record.exclusion_fallback;
  return doc;
}

json mpc_stage_to_json(const MpcStageLog& entry, bool include_messages) {
  json doc;
  doc["stage"] = entry.stage;
  doc["input"] = vector_to_json(entry.applied_input);
  doc["state"] = vector_to_json(entry.realized_state);
  doc["disturbance"] = vector_to_json(entry.disturbance);
  doc["stage_costs"] = entry.stage_costs;
  doc["round_infeasible"] = entry.round_infeasible;
  if (include_messages && !entry.messages.empty()) {
    json msgs = json::array();
    for (const Message& m : entry.messages) msgs.push_back(message_to_json(m));
    doc["messages"] = msgs;
  }
  return doc;
}

json profile_to_json(const std::vector<Message>& profile) {
  json doc = json::array();
  for (const Message& m : profile) doc.push_back(message_to_json(m));
  return doc;
}

std::vector<Message> profile_from_json(const json& doc) {
  std::vector<Message> profile;
  for (const auto& m : doc) profile.push_back(message_from_json(m));
  return profile;
}

void write_header(std::ostream& out, const ArtifactHeader& header) {
  out << "# mechmpc " << header.tool_version << "\n";
  out << "# scenario_hash: " << header.scenario_hash << "\n";
  out << "# seed: " << header.seed << "\n";
  out << "# command: " << header.command_line << "\n";
}

void write_csv(std::ostream& out, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows) {
  for (size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
  out << "\n";
  for (const auto& row : rows) {
    for (size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << format_double(row[i]);
    out << "\n";
  }
}

void write_mpc_log_csv(std::ostream& out, const MpcLog& log) {
  std::vector<std::string> header{"stage"};
  const int n = static_cast<int>(log.initial_state.size());
  const int m = log.stages.empty() ? 0 : static_cast<int>(log.stages[0].applied_input.size());
  for (int j = 0; j < n; ++j) header.push_back("state" + std::to_string(j));
  for (int h = 0; h < m; ++h) header.push_back("input" + std::to_string(h));
  header.push_back("stage_cost");
  header.push_back("infeasible");
  std::vector<std::vector<double>> rows;
  for (size_t t = 0; t < log.stages.size(); ++t) {
    const MpcStageLog& e = log.stages[t];
    std::vector<double> row{static_cast<double>(t)};
    const Eigen::VectorXd& x = t == 0 ? log.initial_state : log.stages[t - 1].realized_state;
    for (int j = 0; j < n; ++j) row.push_back(x(j));
    for (int h = 0; h < m; ++h) row.push_back(e.applied_input(h));
    double cost = 0.0;
    for (double c : e.stage_costs) cost += c;
    row.push_back(cost);
    row.push_back(e.round_infeasible ? 1.0 : 0.0);
    rows.push_back(std::move(row));
  }
  write_csv(out, header, rows);
}

void write_mpc_log_jsonl(std::ostream& out, const MpcLog& log) {
  for (const MpcStageLog& entry : log.stages)
    out << mpc_stage_to_json(entry, log.controller == ControllerKind::mechanism).dump() << "\n";
}

}  // namespace mechmpc
