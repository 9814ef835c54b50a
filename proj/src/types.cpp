#include "geomreid/types.hpp"

namespace geomreid {

void validate(const PersonFrame& frame) {
  if (frame.points.rows() < 1) raise(Errc::invalid_frame, "frame must contain at least one point");
  if (!frame.points.allFinite()) raise(Errc::invalid_frame, "non-finite coordinate");
  if (frame.colors) {
    if (frame.colors->rows() != frame.points.rows())
      raise(Errc::invalid_frame, "colors not aligned with points");
    if (!frame.colors->allFinite()) raise(Errc::invalid_frame, "non-finite color");
  }
  if (frame.part_labels && frame.part_labels->size() != frame.points.rows())
    raise(Errc::invalid_frame, "part labels not aligned with points");
}

void validate(const PersonSequence& seq) {
  if (seq.frames.empty()) raise(Errc::invalid_sequence, "sequence has no frames");
  if (seq.identity_id.empty()) raise(Errc::invalid_sequence, "empty identity_id");
  if (seq.surgery_id.empty()) raise(Errc::invalid_sequence, "empty surgery_id");
  for (std::size_t i = 0; i < seq.frames.size(); ++i) {
    validate(seq.frames[i]);
    if (i > 0 && !(seq.frames[i].timestamp_s > seq.frames[i - 1].timestamp_s))
      raise(Errc::invalid_sequence, "timestamps not strictly increasing at frame " + std::to_string(i));
  }
}

}  // namespace geomreid
