#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dstreamon/xfsm/program.hpp"

namespace dstreamon::compiler {

/// Problems found in a monitoring program document, in document order.
struct ValidationReport {
  std::vector<xfsm::Issue> errors;
  std::vector<xfsm::Issue> warnings;

  bool ok() const { return errors.empty(); }
  /// One "error|warning <path>: <message>" line per issue.
  std::string to_string() const;
};

struct ParseResult {
  std::optional<xfsm::XfsmProgram> program;  // set iff report.ok()
  ValidationReport report;
};

/// Parses the XML monitoring language:
///
///   <program id="synflood" version="1" [seed="N"]>
///     <flowkey fields="src_ip,dst_ip"/>
///     <events><event name="tcp_syn" match="proto=tcp and syn and not ack"/></events>
///     <metrics><metric name="syns" kind="exact_counter" [window="10"] [key="..."]/>
///              <metric name="cms" kind="count_min_sketch" width="1024" depth="4"/></metrics>
///     <features><feature name="syn_count" expr="syns [+|- N]..." [scale="1/2"]/></features>
///     <states initial="SAFE"><state name="SAFE"/><state name="ALARM"/></states>
///     <transitions>
///       <t from="SAFE" on="tcp_syn" cond="syn_count >= 5" to="ALARM">
///         <action kind="publish" severity="alert" label="synflood" payload="src={flow_key}"/>
///       </t>
///     </transitions>
///   </program>
///
/// All errors are collected; nothing is fail-fast.
ParseResult parse_dsl(std::string_view xml);

/// Canonical XML rendering of a program; parse_dsl(to_dsl(p)) yields p.
std::string to_dsl(const xfsm::XfsmProgram& program);

/// Infix text of a postfix condition, using feature names.
std::string condition_to_string(const xfsm::XfsmProgram& program, const xfsm::Condition& cond);

/// Default sketch seed for a program that does not set one (FNV-1a of the id).
std::uint64_t default_seed(std::string_view program_id);

}  // namespace dstreamon::compiler
