#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

#include "srplr/rng.hpp"

namespace srplr {

/// One (user, item, timestamp) event. Timestamps are integer seconds, or
/// a monotone ordinal when the source has no time column.
struct Interaction {
  std::string user_id;
  std::string item_id;
  std::int64_t timestamp = 0;
};

/// A user history with its next-item target. `history` is left-padded
/// with id 0 to a fixed length; non-padding entries are in chronological
/// order. Dense item ids start at 1; 0 is reserved for padding.
struct SequenceExample {
  int user = 0;
  std::vector<int> history;
  int target = 0;
  int history_len = 0;
};

/// Bidirectional string <-> dense-integer maps. Index 0 is unused
/// (padding); names are stored 1-based.
struct IdMaps {
  std::vector<std::string> user_names;  // user_names[dense-1] = raw id
  std::vector<std::string> item_names;
  std::unordered_map<std::string, int> user_ids;
  std::unordered_map<std::string, int> item_ids;

  /// FNV-1a over both name lists; identifies the id space a model was
  /// trained against.
  std::uint64_t fingerprint() const;
};

struct DatasetSplit {
  int user_count = 0;
  int item_count = 0;
  int max_len = 0;
  std::vector<SequenceExample> train;
  std::vector<SequenceExample> valid;
  std::vector<SequenceExample> test;
  IdMaps ids;
  int dropped_users = 0;  // users with < 3 interactions after filtering
};

enum class FileFormat { tsv, csv };

/// Column selection for interaction logs. When the first line matches the
/// configured column names it is consumed as a header and names resolve
/// the indices; otherwise the indices are used directly.
struct LoadOptions {
  char delimiter = '\0';  // 0 = derive from format
  int user_col = 0;
  int item_col = 1;
  int time_col = 2;  // -1 = no time column; file order becomes the ordinal
  std::string user_name = "user_id";
  std::string item_name = "item_id";
  std::string time_name = "timestamp";
};

/// Parses a delimiter-separated interaction log. Malformed rows raise
/// ParseError with the offending line number; a missing file raises
/// IoError. Rows are returned in file order.
std::vector<Interaction> load_interactions(const std::filesystem::path& path, FileFormat format,
                                           const LoadOptions& options = {});

/// Iteratively removes users and items with fewer than k events until
/// every survivor has at least k. Deterministic; may return empty.
std::vector<Interaction> k_core_filter(const std::vector<Interaction>& interactions, int k);

enum class TrainPrefixes { all, last };

/// Leave-one-out splits: per user the last item is the test target, the
/// second-to-last the validation target, and earlier positions become
/// train targets (all prefixes by default, or only the latest one).
/// Users with fewer than 3 interactions are dropped and counted.
DatasetSplit build_splits(const std::vector<Interaction>& interactions, int max_len,
                          TrainPrefixes prefixes = TrainPrefixes::all);

/// Draws `count` distinct items uniformly from [1, item_count] excluding
/// the example's history and target. Deterministic given the rng state.
std::vector<int> sample_logic_negatives(const SequenceExample& example, int count, int item_count,
                                        Rng& rng);

/// Independently replaces each non-padding history item with padding with
/// probability r. If every item would be masked the chronologically last
/// one is kept, so the history never becomes empty. The target is never
/// touched.
SequenceExample mask_history(const SequenceExample& example, double r, Rng& rng);

// Split directory layout: meta.txt (key-value), user_map.txt and
// item_map.txt (dense id <tab> raw id), train.txt / valid.txt / test.txt
// (user <tab> space-separated unpadded history <tab> target).
void save_split_dir(const DatasetSplit& split, const std::filesystem::path& dir);
DatasetSplit load_split_dir(const std::filesystem::path& dir);

/// Corpus statistics in the usual preprocessing-report shape.
struct CorpusStats {
  int users = 0;
  int items = 0;
  long ratings = 0;
  double avg_length = 0.0;
  double sparsity = 0.0;  // fraction of the user x item grid left empty
};
CorpusStats corpus_stats(const std::vector<Interaction>& interactions);

}  // namespace srplr
