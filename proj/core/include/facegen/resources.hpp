#pragma once

#include <string_view>

// Shipped resource files, compiled in from core/resources/.
namespace facegen::resources {

std::string_view lexicon_json();
std::string_view stopwords_txt();
std::string_view lemma_rules_json();

}  // namespace facegen::resources
