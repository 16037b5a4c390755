#include "selfcf/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "json.hpp"

#include "selfcf/errors.hpp"
#include "selfcf/rng.hpp"

namespace selfcf {
namespace {

std::string_view trim(std::string_view s) {
  const auto ws = " \t\r\n";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

std::string detect_delimiter(std::string_view line) {
  if (line.find("::") != std::string_view::npos) return "::";
  if (line.find('\t') != std::string_view::npos) return "\t";
  if (line.find(',') != std::string_view::npos) return ",";
  return " ";
}

std::vector<std::string_view> split(std::string_view line, const std::string& delim) {
  std::vector<std::string_view> out;
  if (delim == " ") {
    std::size_t pos = 0;
    while (pos < line.size()) {
      const auto b = line.find_first_not_of(" \t", pos);
      if (b == std::string_view::npos) break;
      auto e = line.find_first_of(" \t", b);
      if (e == std::string_view::npos) e = line.size();
      out.push_back(line.substr(b, e - b));
      pos = e;
    }
    return out;
  }
  std::size_t pos = 0;
  while (true) {
    const auto e = line.find(delim, pos);
    if (e == std::string_view::npos) {
      out.push_back(trim(line.substr(pos)));
      break;
    }
    out.push_back(trim(line.substr(pos, e - pos)));
    pos = e + delim.size();
  }
  return out;
}

bool parse_timestamp(std::string_view s, std::int64_t& out) {
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  if (ec == std::errc() && ptr == s.data() + s.size()) return true;
  // Accept float-formatted timestamps such as "978300760.0".
  std::string copy(s);
  char* end = nullptr;
  const double v = std::strtod(copy.c_str(), &end);
  if (end != copy.c_str() + copy.size() || copy.empty() || !std::isfinite(v)) return false;
  out = static_cast<std::int64_t>(std::llround(v));
  return true;
}

std::uint64_t pair_key(std::size_t u, std::size_t i) {
  return (static_cast<std::uint64_t>(u) << 32) ^ static_cast<std::uint64_t>(i);
}

std::vector<std::vector<std::size_t>> positives(std::size_t num_users,
                                                const std::vector<Interaction>& records) {
  std::vector<std::vector<std::size_t>> out(num_users);
  for (const auto& r : records) out[r.user].push_back(r.item);
  for (auto& items : out) {
    std::sort(items.begin(), items.end());
    items.erase(std::unique(items.begin(), items.end()), items.end());
  }
  return out;
}

void write_partition(const std::filesystem::path& path, const std::vector<Interaction>& records) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "user_idx\titem_idx\ttimestamp\n";
  for (const auto& r : records) out << r.user << '\t' << r.item << '\t' << r.timestamp << '\n';
}

std::vector<Interaction> read_partition(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  std::vector<Interaction> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1) continue;
    if (trim(line).empty()) continue;
    std::istringstream ss(line);
    Interaction r;
    if (!(ss >> r.user >> r.item >> r.timestamp)) {
      throw ParseError("malformed record in " + path.string(), line_no);
    }
    records.push_back(r);
  }
  return records;
}

}  // namespace

FieldOrder FieldOrder::parse(std::string_view spec) {
  FieldOrder order;
  order.fields.clear();
  std::size_t pos = 0;
  while (pos <= spec.size()) {
    auto e = spec.find(',', pos);
    if (e == std::string_view::npos) e = spec.size();
    const auto name = trim(spec.substr(pos, e - pos));
    if (name == "user") {
      order.fields.push_back(Field::user);
    } else if (name == "item") {
      order.fields.push_back(Field::item);
    } else if (name == "rating") {
      order.fields.push_back(Field::rating);
    } else if (name == "time" || name == "timestamp") {
      order.fields.push_back(Field::timestamp);
    } else if (name == "skip" || name == "_") {
      order.fields.push_back(Field::ignore);
    } else {
      throw ConfigError("unknown field '" + std::string(name) + "' in field order");
    }
    pos = e + 1;
  }
  const auto count = [&](Field f) { return std::count(order.fields.begin(), order.fields.end(), f); };
  if (count(Field::user) != 1 || count(Field::item) != 1 || count(Field::timestamp) != 1) {
    throw ConfigError("field order needs exactly one user, item and time column");
  }
  return order;
}

std::size_t FieldOrder::min_fields() const { return std::max<std::size_t>(fields.size(), 3); }

std::vector<RawInteraction> parse_interactions(std::string_view text,
                                               const IngestOptions& options) {
  std::vector<RawInteraction> out;
  std::string delim = options.delimiter;
  bool header_pending = options.skip_header;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto e = text.find('\n', pos);
    if (e == std::string_view::npos) e = text.size();
    const auto line = trim(text.substr(pos, e - pos));
    pos = e + 1;
    ++line_no;
    if (line.empty() || line.front() == '#') continue;
    if (header_pending) {
      header_pending = false;
      continue;
    }
    if (delim.empty()) delim = detect_delimiter(line);
    const auto parts = split(line, delim);
    if (parts.size() < options.order.min_fields()) {
      throw ParseError("expected " + std::to_string(options.order.min_fields()) +
                           " fields, found " + std::to_string(parts.size()),
                       line_no);
    }
    RawInteraction r;
    for (std::size_t f = 0; f < options.order.fields.size(); ++f) {
      switch (options.order.fields[f]) {
        case Field::user: r.user = std::string(parts[f]); break;
        case Field::item: r.item = std::string(parts[f]); break;
        case Field::timestamp:
          if (!parse_timestamp(parts[f], r.timestamp)) {
            throw ParseError("bad timestamp '" + std::string(parts[f]) + "'", line_no);
          }
          break;
        case Field::rating:  // implicit feedback: the value is dropped
        case Field::ignore: break;
      }
    }
    if (r.user.empty() || r.item.empty()) throw ParseError("empty id", line_no);
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<RawInteraction> ingest(const std::filesystem::path& path,
                                   const IngestOptions& options) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  if (in.bad()) throw IoError("read failed for " + path.string());
  auto records = parse_interactions(buffer.str(), options);
  if (records.empty()) throw IoError(path.string() + " contains no interactions");
  return records;
}

std::vector<RawInteraction> deduplicate(const std::vector<RawInteraction>& interactions) {
  std::unordered_map<std::string, std::size_t> first;  // "user\0item" -> output slot
  std::vector<RawInteraction> out;
  out.reserve(interactions.size());
  for (const auto& r : interactions) {
    std::string key = r.user;
    key.push_back('\0');
    key += r.item;
    auto [it, inserted] = first.emplace(std::move(key), out.size());
    if (inserted) {
      out.push_back(r);
    } else if (r.timestamp < out[it->second].timestamp) {
      out[it->second].timestamp = r.timestamp;
    }
  }
  return out;
}

std::vector<RawInteraction> kcore_filter(const std::vector<RawInteraction>& interactions,
                                         std::size_t k) {
  if (k == 0) throw InvalidParameter("kcore_filter needs k >= 1");
  std::vector<RawInteraction> current = deduplicate(interactions);
  while (true) {
    std::unordered_map<std::string, std::size_t> user_deg;
    std::unordered_map<std::string, std::size_t> item_deg;
    for (const auto& r : current) {
      ++user_deg[r.user];
      ++item_deg[r.item];
    }
    std::vector<RawInteraction> next;
    next.reserve(current.size());
    for (const auto& r : current) {
      if (user_deg[r.user] >= k && item_deg[r.item] >= k) next.push_back(r);
    }
    if (next.size() == current.size()) return next;
    current = std::move(next);
  }
}

InteractionDataset::InteractionDataset(std::size_t num_users, std::size_t num_items,
                                       std::vector<Interaction> train,
                                       std::vector<Interaction> validation,
                                       std::vector<Interaction> test)
    : num_users_(num_users),
      num_items_(num_items),
      train_(std::move(train)),
      validation_(std::move(validation)),
      test_(std::move(test)) {
  for (const auto* part : {&train_, &validation_, &test_}) {
    std::unordered_set<std::uint64_t> seen;
    for (const auto& r : *part) {
      if (r.user >= num_users_ || r.item >= num_items_) {
        throw InvalidIndex("interaction (" + std::to_string(r.user) + ", " +
                           std::to_string(r.item) + ") out of range");
      }
      if (!seen.insert(pair_key(r.user, r.item)).second) {
        throw InvalidParameter("duplicate pair within a partition");
      }
    }
  }
  train_pos_ = positives(num_users_, train_);
  valid_pos_ = positives(num_users_, validation_);
  test_pos_ = positives(num_users_, test_);
  seen_pos_.resize(num_users_);
  for (std::size_t u = 0; u < num_users_; ++u) {
    std::set_union(train_pos_[u].begin(), train_pos_[u].end(), valid_pos_[u].begin(),
                   valid_pos_[u].end(), std::back_inserter(seen_pos_[u]));
  }
}

double InteractionDataset::sparsity() const {
  if (num_users_ == 0 || num_items_ == 0) return 1.0;
  return 1.0 - static_cast<double>(num_interactions()) /
                   (static_cast<double>(num_users_) * static_cast<double>(num_items_));
}

InteractionDataset remap_and_split(const std::vector<RawInteraction>& interactions,
                                   SplitRatios ratios) {
  if (interactions.empty()) throw InvalidParameter("remap_and_split: no interactions");
  if (!(ratios.train > 0 && ratios.validation > 0 && ratios.test > 0) ||
      std::abs(ratios.train + ratios.validation + ratios.test - 1.0) > 1e-9) {
    throw InvalidParameter("split ratios must be positive and sum to 1");
  }
  const auto unique = deduplicate(interactions);

  std::unordered_map<std::string, std::size_t> user_index;
  std::unordered_map<std::string, std::size_t> item_index;
  std::vector<std::string> user_ids;
  std::vector<std::string> item_ids;
  std::vector<std::vector<Interaction>> per_user;
  for (const auto& r : unique) {
    auto [uit, unew] = user_index.emplace(r.user, user_ids.size());
    if (unew) {
      user_ids.push_back(r.user);
      per_user.emplace_back();
    }
    auto [iit, inew] = item_index.emplace(r.item, item_ids.size());
    if (inew) item_ids.push_back(r.item);
    per_user[uit->second].push_back({uit->second, iit->second, r.timestamp});
  }

  std::vector<Interaction> train;
  std::vector<Interaction> validation;
  std::vector<Interaction> test;
  for (auto& records : per_user) {
    std::sort(records.begin(), records.end(), [](const Interaction& a, const Interaction& b) {
      return a.timestamp != b.timestamp ? a.timestamp < b.timestamp : a.item < b.item;
    });
    const std::size_t n = records.size();
    const double nd = static_cast<double>(n);
    // The epsilon stops products like 0.1 * 30 = 3.0000000000000004 rounding up.
    const auto ceil_count = [&](double r) {
      return static_cast<std::size_t>(std::ceil(r * nd - 1e-9));
    };
    const std::size_t n_train = std::min(n, ceil_count(ratios.train));
    const std::size_t n_valid = std::min(n - n_train, ceil_count(ratios.validation));
    for (std::size_t k = 0; k < n; ++k) {
      auto& dst = k < n_train ? train : (k < n_train + n_valid ? validation : test);
      dst.push_back(records[k]);
    }
  }

  InteractionDataset dataset(user_ids.size(), item_ids.size(), std::move(train),
                             std::move(validation), std::move(test));
  dataset.user_ids = std::move(user_ids);
  dataset.item_ids = std::move(item_ids);
  return dataset;
}

std::vector<Batch> batch_iterator(const InteractionDataset& dataset, std::size_t batch_size,
                                  std::uint64_t epoch_seed) {
  if (batch_size == 0) throw InvalidParameter("batch size must be positive");
  const auto& train = dataset.train();
  if (train.empty()) throw InvalidParameter("training partition is empty");

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(epoch_seed, /*stream=*/0x62617463ULL);
  for (std::size_t k = order.size() - 1; k > 0; --k) {
    std::swap(order[k], order[rng.below(k + 1)]);
  }

  std::vector<Batch> batches;
  batches.reserve((order.size() + batch_size - 1) / batch_size);
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t end = std::min(order.size(), start + batch_size);
    Batch b;
    b.users.reserve(end - start);
    b.items.reserve(end - start);
    for (std::size_t k = start; k < end; ++k) {
      b.users.push_back(train[order[k]].user);
      b.items.push_back(train[order[k]].item);
    }
    batches.push_back(std::move(b));
  }
  return batches;
}

void write_canonical(const InteractionDataset& dataset, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_partition(dir / "train.tsv", dataset.train());
  write_partition(dir / "valid.tsv", dataset.validation());
  write_partition(dir / "test.tsv", dataset.test());

  nlohmann::json meta;
  meta["num_users"] = dataset.num_users();
  meta["num_items"] = dataset.num_items();
  meta["num_interactions"] = dataset.num_interactions();
  meta["sparsity"] = dataset.sparsity();
  meta["user_ids"] = dataset.user_ids;
  meta["item_ids"] = dataset.item_ids;
  std::ofstream out(dir / "dataset.json");
  if (!out) throw IoError("cannot write " + (dir / "dataset.json").string());
  out << meta.dump(1) << '\n';
}

InteractionDataset read_canonical(const std::filesystem::path& dir) {
  std::ifstream in(dir / "dataset.json");
  if (!in) throw IoError("cannot read " + (dir / "dataset.json").string());
  nlohmann::json meta;
  try {
    in >> meta;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed dataset.json: " + std::string(e.what()));
  }
  InteractionDataset dataset(meta.at("num_users").get<std::size_t>(),
                             meta.at("num_items").get<std::size_t>(),
                             read_partition(dir / "train.tsv"), read_partition(dir / "valid.tsv"),
                             read_partition(dir / "test.tsv"));
  if (meta.contains("user_ids")) dataset.user_ids = meta["user_ids"].get<std::vector<std::string>>();
  if (meta.contains("item_ids")) dataset.item_ids = meta["item_ids"].get<std::vector<std::string>>();
  return dataset;
}

std::vector<RawInteraction> make_block_interactions(const BlockDatasetSpec& spec) {
  if (spec.blocks == 0 || spec.items < spec.blocks || spec.users == 0) {
    throw InvalidParameter("block dataset needs users >= 1 and items >= blocks >= 1");
  }
  Rng rng(spec.seed, /*stream=*/0x626c6f63ULL);
  std::vector<RawInteraction> out;
  out.reserve(spec.users * spec.interactions_per_user);
  for (std::size_t u = 0; u < spec.users; ++u) {
    const std::size_t block = u % spec.blocks;
    std::vector<std::size_t> inside;
    std::vector<std::size_t> outside;
    for (std::size_t i = 0; i < spec.items; ++i) (i % spec.blocks == block ? inside : outside).push_back(i);
    for (std::size_t n = 0; n < spec.interactions_per_user; ++n) {
      const bool noisy = rng.bernoulli(spec.noise);
      auto& pool = (noisy && !outside.empty()) || inside.empty() ? outside : inside;
      if (pool.empty()) break;
      const std::size_t pick = static_cast<std::size_t>(rng.below(pool.size()));
      const std::size_t item = pool[pick];
      pool[pick] = pool.back();
      pool.pop_back();
      out.push_back({"u" + std::to_string(u), "i" + std::to_string(item),
                     static_cast<std::int64_t>(rng.below(1'000'000))});
    }
  }
  return out;
}

}  // namespace selfcf
