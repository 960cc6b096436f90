#pragma once

#include <string>

#include "triage/decode.hpp"
#include "triage/rank.hpp"
#include "triage/tag.hpp"

namespace triage::checkpoint {

// Versioned JSON checkpoints; loading refuses unknown versions and kinds.

void save_binary_head(const rank::BinaryHead& head, const std::string& path);
rank::BinaryHead load_binary_head(const std::string& path);

void save_tag_head(const tag::TagHead& head, const std::string& path);
tag::TagHead load_tag_head(const std::string& path);

void save_decoder(const decode::ConditionedDecoderParams& params, const std::string& path);
decode::ConditionedDecoderParams load_decoder(const std::string& path);

}  // namespace triage::checkpoint
