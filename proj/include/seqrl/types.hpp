#pragma once

#include <vector>

namespace seqrl {

// Grapheme ids are dense in [0, vocab); eos and sos take the two top ids.
using Symbol = int;
using Transcript = std::vector<Symbol>;

}  // namespace seqrl
