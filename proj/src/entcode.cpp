#include "nwc/entcode.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <string>

#include "nwc/bytes.hpp"
#include "nwc/error.hpp"

namespace nwc::entcode {
namespace {

constexpr std::uint8_t kMagic[4] = {0x4E, 0x57, 0x43, 0x5A};

std::size_t ceil_div8(std::uint64_t bits) { return static_cast<std::size_t>(bits / 8 + (bits % 8 != 0 ? 1 : 0)); }

}  // namespace

double ChannelTable::cost_bits(std::int32_t value) const {
  if (in_support(value)) return -std::log2(probability(static_cast<std::size_t>(value - k_min)));
  return -std::log2(probability(escape_index())) + 32.0;
}

std::vector<std::uint32_t> quantize_pmf(std::span<const double> probs) {
  const std::size_t n = probs.size();
  if (n == 0 || n > kFreqTotal) throw ContractViolation("quantize_pmf: symbol count must lie in [1, 2^16]");
  double sum = 0.0;
  for (double p : probs) {
    if (!(p >= 0.0) || !std::isfinite(p)) throw NumericError("quantize_pmf: probabilities must be finite and >= 0");
    sum += p;
  }
  std::vector<double> target(n);
  std::vector<std::int64_t> freq(n);
  std::int64_t total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    target[i] = sum > 0.0 ? probs[i] / sum * kFreqTotal : static_cast<double>(kFreqTotal) / static_cast<double>(n);
    freq[i] = std::max<std::int64_t>(1, std::llround(target[i]));
    total += freq[i];
  }

  std::vector<std::size_t> order(n);
  while (total != kFreqTotal) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    if (total < kFreqTotal) {
      // Give the missing counts to the most under-allocated symbols.
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return target[a] - static_cast<double>(freq[a]) > target[b] - static_cast<double>(freq[b]);
      });
      for (std::size_t i = 0; i < n && total < kFreqTotal; ++i, ++total) ++freq[order[i]];
    } else {
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return static_cast<double>(freq[a]) - target[a] > static_cast<double>(freq[b]) - target[b];
      });
      for (std::size_t i = 0; i < n && total > kFreqTotal; ++i) {
        if (freq[order[i]] > 1) {
          --freq[order[i]];
          --total;
        }
      }
    }
  }
  return {freq.begin(), freq.end()};
}

ChannelTable table_from_probabilities(std::int32_t k_min, std::span<const double> probs) {
  if (probs.empty()) throw ContractViolation("table_from_probabilities: empty support");
  if (static_cast<std::int64_t>(probs.size()) > kMaxSupport)
    throw NumericError("table_from_probabilities: support wider than 2^15 symbols");
  std::vector<double> with_escape(probs.begin(), probs.end());
  const double in_support = std::accumulate(probs.begin(), probs.end(), 0.0);
  with_escape.push_back(std::max(0.0, 1.0 - in_support));
  const std::vector<std::uint32_t> freq = quantize_pmf(with_escape);

  ChannelTable t;
  t.k_min = k_min;
  t.k_max = static_cast<std::int32_t>(k_min + static_cast<std::int64_t>(probs.size()) - 1);
  t.cdf.assign(freq.size() + 1, 0);
  for (std::size_t i = 0; i < freq.size(); ++i) t.cdf[i + 1] = t.cdf[i] + freq[i];
  return t;
}

PmfTable build_tables(const codec::FactorizedEntropyModel& model) {
  PmfTable tables;
  tables.channels.reserve(static_cast<std::size_t>(model.channels));
  for (int c = 0; c < model.channels; ++c) {
    const auto cu = static_cast<std::size_t>(c);
    const double q_lo = model.quantiles.value(cu, 0);
    const double q_hi = model.quantiles.value(cu, 2);
    if (!std::isfinite(q_lo) || !std::isfinite(q_hi) || q_lo > q_hi)
      throw NumericError("build_tables: invalid quantiles for channel " + std::to_string(c));
    const double lo = std::floor(q_lo);
    const double hi = std::ceil(q_hi);
    if (hi - lo + 1.0 > static_cast<double>(kMaxSupport))
      throw NumericError("build_tables: support of channel " + std::to_string(c) + " is wider than 2^15 symbols");
    const auto k_min = static_cast<std::int32_t>(lo);
    const auto k_max = static_cast<std::int32_t>(hi);
    std::vector<double> probs;
    probs.reserve(static_cast<std::size_t>(k_max - k_min + 1));
    for (std::int32_t k = k_min; k <= k_max; ++k) probs.push_back(model.mass(c, k));
    tables.channels.push_back(table_from_probabilities(k_min, probs));
  }
  return tables;
}

std::vector<std::uint8_t> encode_symbols(std::span<const std::int32_t> symbols, const PmfTable& tables) {
  if (!symbols.empty() && tables.channels.empty()) throw ContractViolation("encode_symbols: no tables");
  RangeEncoder enc;
  const std::size_t channels = tables.channel_count();
  for (std::size_t i = 0; i < symbols.size(); ++i) {
    const ChannelTable& t = tables.channels[i % channels];
    const std::int32_t s = symbols[i];
    if (t.in_support(s)) {
      const auto idx = static_cast<std::size_t>(s - t.k_min);
      enc.encode(t.cdf[idx], t.freq(idx));
    } else {
      const std::size_t esc = t.escape_index();
      enc.encode(t.cdf[esc], t.freq(esc));
      const auto raw = static_cast<std::uint32_t>(s);
      enc.encode(raw & 0xFFFFu, 1);
      enc.encode(raw >> 16, 1);
    }
  }
  return enc.finish();
}

std::vector<std::int32_t> decode_symbols(std::span<const std::uint8_t> bytes, const PmfTable& tables,
                                         std::size_t count) {
  if (count > 0 && tables.channels.empty()) throw ContractViolation("decode_symbols: no tables");
  RangeDecoder dec(bytes);
  const std::size_t channels = tables.channel_count();
  std::vector<std::int32_t> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    const ChannelTable& t = tables.channels[i % channels];
    const std::uint32_t target = dec.target();
    const auto it = std::upper_bound(t.cdf.begin(), t.cdf.end(), target);
    const auto idx = static_cast<std::size_t>(it - t.cdf.begin()) - 1;
    dec.consume(t.cdf[idx], t.freq(idx));
    if (idx != t.escape_index()) {
      out[i] = t.k_min + static_cast<std::int32_t>(idx);
      continue;
    }
    const std::uint32_t low16 = dec.target();
    dec.consume(low16, 1);
    const std::uint32_t high16 = dec.target();
    dec.consume(high16, 1);
    const auto value = static_cast<std::int32_t>(low16 | (high16 << 16));
    if (t.in_support(value)) throw CorruptionError("decode_symbols: escaped value lies inside the support");
    out[i] = value;
  }
  if (!dec.exhausted()) throw CorruptionError("decode_symbols: trailing payload bytes");
  if (!dec.finished_cleanly()) throw CorruptionError("decode_symbols: final coder state does not match the flush");
  return out;
}

double ideal_bits(std::span<const std::int32_t> symbols, const PmfTable& tables) {
  if (!symbols.empty() && tables.channels.empty()) throw ContractViolation("ideal_bits: no tables");
  double bits = 0.0;
  for (std::size_t i = 0; i < symbols.size(); ++i) bits += tables.channels[i % tables.channel_count()].cost_bits(symbols[i]);
  return bits;
}

int quality_bit_width(int levels) {
  if (levels < 1) throw ContractViolation("quality_bit_width: levels must be >= 1");
  return static_cast<int>(std::bit_width(static_cast<unsigned>(levels - 1)));
}

std::vector<std::uint8_t> pack_quality(std::span<const std::uint8_t> quality, int levels) {
  const int w = quality_bit_width(levels);
  std::vector<std::uint8_t> out(ceil_div8(static_cast<std::uint64_t>(quality.size()) * static_cast<unsigned>(w)), 0);
  std::size_t bit = 0;
  for (std::uint8_t q : quality) {
    if (q >= levels) throw ContractViolation("pack_quality: level out of range");
    for (int j = 0; j < w; ++j, ++bit)
      if ((q >> j) & 1u) out[bit / 8] |= static_cast<std::uint8_t>(1u << (bit % 8));
  }
  return out;
}

std::vector<std::uint8_t> unpack_quality(std::span<const std::uint8_t> packed, std::size_t count, int levels) {
  const int w = quality_bit_width(levels);
  if (packed.size() < ceil_div8(static_cast<std::uint64_t>(count) * static_cast<unsigned>(w)))
    throw TruncatedError("unpack_quality: not enough packed bits");
  std::vector<std::uint8_t> out(count, 0);
  std::size_t bit = 0;
  for (std::size_t i = 0; i < count; ++i) {
    unsigned q = 0;
    for (int j = 0; j < w; ++j, ++bit) q |= ((packed[bit / 8] >> (bit % 8)) & 1u) << j;
    if (q >= static_cast<unsigned>(levels)) throw CorruptionError("unpack_quality: level out of range");
    out[i] = static_cast<std::uint8_t>(q);
  }
  return out;
}

std::vector<std::uint8_t> serialize_compressed(const CompressedTensor& ct) {
  if (ct.scales.size() != ct.cols || ct.quality.size() != ct.cols)
    throw ContractViolation("serialize_compressed: per-column arrays must have one entry per column");
  if (ct.payload.size() != ceil_div8(ct.payload_bits))
    throw ContractViolation("serialize_compressed: payload size disagrees with payload_bits");
  if (ct.level_count == 0 || ct.chunk_size == 0) throw ContractViolation("serialize_compressed: empty header field");
  ByteWriter w;
  w.bytes(kMagic);
  w.u8(kContainerVersion);
  w.u64(ct.model_hash);
  w.u32(ct.rows);
  w.u32(ct.cols);
  w.u16(ct.chunk_size);
  w.u8(ct.level_count);
  for (std::uint16_t s : ct.scales) w.u16(s);
  w.bytes(pack_quality(ct.quality, ct.level_count));
  w.u64(ct.payload_bits);
  w.bytes(ct.payload);
  return w.take();
}

CompressedTensor deserialize_compressed(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  const auto magic = r.take(4);
  if (!std::equal(magic.begin(), magic.end(), kMagic)) throw FormatError("not an NWCZ container (bad magic)");
  const std::uint8_t version = r.u8();
  if (version != kContainerVersion) throw UnknownVersionError("unsupported NWCZ version " + std::to_string(version));
  CompressedTensor ct;
  ct.model_hash = r.u64();
  ct.rows = r.u32();
  ct.cols = r.u32();
  ct.chunk_size = r.u16();
  ct.level_count = r.u8();
  if (ct.chunk_size == 0 || ct.level_count == 0) throw FormatError("NWCZ header has a zero chunk size or level count");
  if (r.remaining() / 2 < ct.cols) throw TruncatedError("NWCZ scales truncated");
  ct.scales.resize(ct.cols);
  for (std::uint16_t& s : ct.scales) s = r.u16();
  const std::size_t qbytes =
      ceil_div8(static_cast<std::uint64_t>(ct.cols) * static_cast<unsigned>(quality_bit_width(ct.level_count)));
  ct.quality = unpack_quality(r.take(qbytes), ct.cols, ct.level_count);
  ct.payload_bits = r.u64();
  const std::size_t pbytes = ceil_div8(ct.payload_bits);
  if (r.remaining() < pbytes) throw TruncatedError("NWCZ payload truncated");
  const auto payload = r.take(pbytes);
  ct.payload.assign(payload.begin(), payload.end());
  if (r.remaining() != 0) throw FormatError("NWCZ container has trailing bytes");
  return ct;
}

void write_compressed(const CompressedTensor& ct, const std::filesystem::path& path) {
  write_file(path, serialize_compressed(ct));
}

CompressedTensor read_compressed(const std::filesystem::path& path) { return deserialize_compressed(read_file(path)); }

RateReport rate_report(const CompressedTensor& ct) {
  RateReport rep;
  const double params = static_cast<double>(ct.rows) * static_cast<double>(ct.cols);
  if (params == 0.0) return rep;
  const double m = ct.rows;
  rep.scale_bpp = 16.0 / m;
  rep.quality_bpp = quality_bit_width(ct.level_count) / m;
  rep.payload_bpp = static_cast<double>(ct.payload_bits) / params;
  rep.total_bpp = rep.payload_bpp + rep.scale_bpp + rep.quality_bpp;
  return rep;
}

}  // namespace nwc::entcode
