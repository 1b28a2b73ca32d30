#pragma once

#include <stdexcept>
#include <string>

namespace tutee {

enum class Errc {
  schema,
  integrity,
  invalid_argument,
  unknown_entity,
  unknown_category,
  unknown_feature,
  unknown_note,
  unknown_sentence,
  empty_text,
  arity,
  kind_mismatch,
  unreachable_state,
  unbounded_flow,
  missing_slot,
  conversation_locked,
  not_your_turn,
  expectation_mismatch,
  unknown_selection,
  no_active_members,
  unknown_member,
  unknown_view,
  unknown_session,
  unknown_source,
  empty_log,
  too_few_points,
  single_cluster,
  forbidden,
  unauthorized,
  not_found,
  already_running,
  session_ended,
};

const char* to_string(Errc code);

// Every failure surfaced by the library carries one of the codes above so the
// HTTP layer can map it to a status without string matching.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace tutee
