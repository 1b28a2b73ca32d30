#include "tutee/error.hpp"

namespace tutee {

const char* to_string(Errc code) {
  switch (code) {
    case Errc::schema: return "SchemaError";
    case Errc::integrity: return "IntegrityError";
    case Errc::invalid_argument: return "InvalidArgument";
    case Errc::unknown_entity: return "UnknownEntity";
    case Errc::unknown_category: return "UnknownCategory";
    case Errc::unknown_feature: return "UnknownFeature";
    case Errc::unknown_note: return "UnknownNote";
    case Errc::unknown_sentence: return "UnknownSentence";
    case Errc::empty_text: return "EmptyText";
    case Errc::arity: return "ArityError";
    case Errc::kind_mismatch: return "KindMismatch";
    case Errc::unreachable_state: return "UnreachableState";
    case Errc::unbounded_flow: return "UnboundedFlow";
    case Errc::missing_slot: return "MissingSlot";
    case Errc::conversation_locked: return "ConversationLocked";
    case Errc::not_your_turn: return "NotYourTurn";
    case Errc::expectation_mismatch: return "ExpectationMismatch";
    case Errc::unknown_selection: return "UnknownSelection";
    case Errc::no_active_members: return "NoActiveMembers";
    case Errc::unknown_member: return "UnknownMember";
    case Errc::unknown_view: return "UnknownView";
    case Errc::unknown_session: return "UnknownSession";
    case Errc::unknown_source: return "UnknownSource";
    case Errc::empty_log: return "EmptyLog";
    case Errc::too_few_points: return "TooFewPoints";
    case Errc::single_cluster: return "SingleCluster";
    case Errc::forbidden: return "Forbidden";
    case Errc::unauthorized: return "Unauthorized";
    case Errc::not_found: return "NotFound";
    case Errc::already_running: return "AlreadyRunning";
    case Errc::session_ended: return "SessionEnded";
  }
  return "Error";
}

}  // namespace tutee
