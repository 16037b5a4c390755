#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace selfcf {

struct RawInteraction {
  std::string user;
  std::string item;
  std::int64_t timestamp = 0;

  friend bool operator==(const RawInteraction&, const RawInteraction&) = default;
};

enum class Field { user, item, rating, timestamp, ignore };

// Column layout of a raw log, e.g. "user,item,rating,time".
struct FieldOrder {
  std::vector<Field> fields{Field::user, Field::item, Field::timestamp};

  static FieldOrder parse(std::string_view spec);
  std::size_t min_fields() const;
};

struct IngestOptions {
  FieldOrder order;
  // Empty means autodetect from the first data line ("::", tab, comma, then
  // whitespace).
  std::string delimiter;
  bool skip_header = false;
};

std::vector<RawInteraction> parse_interactions(std::string_view text, const IngestOptions& options);
std::vector<RawInteraction> ingest(const std::filesystem::path& path, const IngestOptions& options);

// Drops duplicate (user, item) pairs, keeping the earliest timestamp, in
// input order of first occurrence.
std::vector<RawInteraction> deduplicate(const std::vector<RawInteraction>& interactions);

// Peels users and items with fewer than k interactions until a fixpoint.
std::vector<RawInteraction> kcore_filter(const std::vector<RawInteraction>& interactions,
                                         std::size_t k);

struct Interaction {
  std::size_t user = 0;
  std::size_t item = 0;
  std::int64_t timestamp = 0;

  friend bool operator==(const Interaction&, const Interaction&) = default;
};

struct SplitRatios {
  double train = 0.8;
  double validation = 0.1;
  double test = 0.1;
};

class InteractionDataset {
 public:
  InteractionDataset() = default;
  // Validates indices and builds the per-user sorted positive sets.
  InteractionDataset(std::size_t num_users, std::size_t num_items, std::vector<Interaction> train,
                     std::vector<Interaction> validation, std::vector<Interaction> test);

  std::size_t num_users() const { return num_users_; }
  std::size_t num_items() const { return num_items_; }
  const std::vector<Interaction>& train() const { return train_; }
  const std::vector<Interaction>& validation() const { return validation_; }
  const std::vector<Interaction>& test() const { return test_; }

  // Sorted item lists per user.
  const std::vector<std::vector<std::size_t>>& train_positives() const { return train_pos_; }
  const std::vector<std::vector<std::size_t>>& validation_positives() const { return valid_pos_; }
  const std::vector<std::vector<std::size_t>>& test_positives() const { return test_pos_; }
  // train ∪ validation, the mask used during test evaluation.
  const std::vector<std::vector<std::size_t>>& seen_positives() const { return seen_pos_; }

  std::size_t num_interactions() const { return train_.size() + validation_.size() + test_.size(); }
  double sparsity() const;

  std::vector<std::string> user_ids;
  std::vector<std::string> item_ids;

 private:
  std::size_t num_users_ = 0;
  std::size_t num_items_ = 0;
  std::vector<Interaction> train_;
  std::vector<Interaction> validation_;
  std::vector<Interaction> test_;
  std::vector<std::vector<std::size_t>> train_pos_;
  std::vector<std::vector<std::size_t>> valid_pos_;
  std::vector<std::vector<std::size_t>> test_pos_;
  std::vector<std::vector<std::size_t>> seen_pos_;
};

// Remaps ids by first appearance and splits every user's history in time
// order: ceil(train*n) records to train, ceil(validation*n) (capped by what
// is left) to validation, the rest to test.
InteractionDataset remap_and_split(const std::vector<RawInteraction>& interactions,
                                   SplitRatios ratios = {});

struct Batch {
  std::vector<std::size_t> users;
  std::vector<std::size_t> items;

  std::size_t size() const { return users.size(); }
};

// One epoch of shuffled training pairs.
std::vector<Batch> batch_iterator(const InteractionDataset& dataset, std::size_t batch_size,
                                  std::uint64_t epoch_seed);

void write_canonical(const InteractionDataset& dataset, const std::filesystem::path& dir);
InteractionDataset read_canonical(const std::filesystem::path& dir);

// Synthetic users and items partitioned into preference blocks. A user's
// interactions come from its own block except for a `noise` fraction drawn
// from the other blocks. Timestamps are random.
struct BlockDatasetSpec {
  std::size_t users = 200;
  std::size_t items = 100;
  std::size_t blocks = 4;
  std::size_t interactions_per_user = 16;
  double noise = 0.05;
  std::uint64_t seed = 1;
};

std::vector<RawInteraction> make_block_interactions(const BlockDatasetSpec& spec);

}  // namespace selfcf
