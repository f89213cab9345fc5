#include <gtest/gtest.h>

#include <random>

#include "dice/metadata.hpp"
#include "kernels.hpp"

using namespace dice;

namespace {

PGraphMetadata zero_record() {
  PGraphMetadata md;
  md.lat = 0;
  md.branch.successor = 0;
  md.branch.reconverge = 0;
  return md;
}

PGraphMetadata meta_for(const Partition& p, int id) {
  const PGraph& pg = p.pgraphs[id];
  Mapping m = place_and_route(pg, {});
  return gen_metadata(pg, m, 0, bitstream_bytes({}), static_cast<int>(p.pgraphs.size()));
}

}  // namespace

TEST(Metadata, RecordIsTwentyThreeBytes) {
  EXPECT_EQ(32 + 8 + 2 + 8 + 34 + 34 + 4 * 6 + 3 + 32 + 1 + 1, kMetadataBits);
  EXPECT_EQ(kMetadataBytes, 23);
}

TEST(Metadata, HandPackedLeadingFields) {
  PGraphMetadata md = zero_record();
  md.bitstream_addr = 0x12345678;
  md.bitstream_length = 245;
  md.unroll = 4;
  md.lat = 9;
  auto b = encode_metadata(md);
  EXPECT_EQ(b[0], 0x78);
  EXPECT_EQ(b[1], 0x56);
  EXPECT_EQ(b[2], 0x34);
  EXPECT_EQ(b[3], 0x12);
  EXPECT_EQ(b[4], 0xF5);
  EXPECT_EQ(b[5], 0x26);  // unroll code 2 in bits 0-1, LAT low bits above
  for (int i = 6; i < kMetadataBytes; ++i) EXPECT_EQ(b[i], 0) << i;
}

TEST(Metadata, HandPackedTrailingFields) {
  PGraphMetadata md = zero_record();
  md.barrier = true;
  auto b = encode_metadata(md);
  for (int i = 0; i < 22; ++i) EXPECT_EQ(b[i], 0) << i;
  EXPECT_EQ(b[22], 0x02);  // bit 177
  md.barrier = false;
  md.parameter_load = true;
  EXPECT_EQ(encode_metadata(md)[22], 0x04);  // bit 178

  md = zero_record();
  md.branch.successor = 0x5A;  // BRANCH starts at bit 145
  b = encode_metadata(md);
  EXPECT_EQ(b[18], 0xB4);
  EXPECT_EQ(b[19], 0x00);

  md = zero_record();
  md.in_regs.set(0);   // bit 50
  md.out_regs.set(33); // bit 84 + 33 = 117
  b = encode_metadata(md);
  EXPECT_EQ(b[6], 0x04);
  EXPECT_EQ(b[14], 0x20);

  md = zero_record();
  md.ld_dest = {4, -1, -1, -1};  // bits 118..123: valid | 4
  b = encode_metadata(md);
  EXPECT_EQ(b[14], static_cast<uint8_t>((0x24 << 6) & 0xFF));
  EXPECT_EQ(b[15], 0x24 >> 2);
}

TEST(Metadata, BranchPacking) {
  BranchMeta b{7, 9, true, true, 1, true, false};
  EXPECT_EQ(pack_branch(b), 7u | 9u << 8 | 1u << 16 | 1u << 17 | 1u << 18 | 1u << 19);
  EXPECT_EQ(unpack_branch(pack_branch(b)), b);
  EXPECT_THROW(unpack_branch(1u << 21), EncodeError);
  b.successor = 256;
  EXPECT_THROW(pack_branch(b), EncodeError);
}

TEST(Metadata, RandomRecordsRoundTrip) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 2000; ++i) {
    PGraphMetadata md;
    md.bitstream_addr = static_cast<uint32_t>(rng());
    md.bitstream_length = rng() % 256;
    md.unroll = 1 << (rng() % 3);
    md.lat = rng() % 256;
    md.in_regs = RegSet(rng());
    md.out_regs = RegSet(rng());
    const int loads = rng() % 5;
    for (int k = 0; k < loads; ++k) md.ld_dest[k] = rng() % 32;
    md.num_stores = rng() % 8;
    md.branch = {static_cast<int>(rng() % 256), static_cast<int>(rng() % 256), rng() % 2 == 1, rng() % 2 == 1,
                 static_cast<int>(rng() % 2), rng() % 2 == 1, rng() % 2 == 1};
    md.barrier = rng() % 2;
    md.parameter_load = rng() % 2;
    auto bytes = encode_metadata(md);
    EXPECT_EQ(decode_metadata(bytes), md);
  }
}

TEST(Metadata, FieldOverflowIsAnEncodeError) {
  PGraphMetadata md;
  md.lat = 300;
  EXPECT_THROW(encode_metadata(md), EncodeError);
  md = {};
  md.num_stores = 8;
  EXPECT_THROW(encode_metadata(md), EncodeError);
  md = {};
  md.unroll = 3;
  EXPECT_THROW(encode_metadata(md), EncodeError);
  md = {};
  md.bitstream_length = 256;
  EXPECT_THROW(encode_metadata(md), EncodeError);
  md = {};
  md.ld_dest = {32, -1, -1, -1};
  EXPECT_THROW(encode_metadata(md), EncodeError);
  md = {};
  md.ld_dest = {-1, 3, -1, -1};
  EXPECT_THROW(encode_metadata(md), EncodeError);
}

TEST(Metadata, DecodeRejectsMalformedRecords) {
  auto b = encode_metadata({});
  EXPECT_THROW(decode_metadata(std::span(b).first(22)), EncodeError);
  auto pad = b;
  pad[22] |= 0x08;
  EXPECT_THROW(decode_metadata(pad), EncodeError);
  auto u = b;
  u[5] |= 0x03;
  EXPECT_THROW(decode_metadata(u), EncodeError);
}

TEST(GenMetadata, TwoLoadsFillLoadDests) {
  Kernel k = parse_kernel(R"(
.kernel k .params 0 .regs 6
  LD.GLOBAL r4, [r0]
  LD.GLOBAL r5, [r1]
  IADD r2, r4, r5
  RET
)");
  Partition p = partition(k, {});
  PGraphMetadata md = meta_for(p, 1);
  EXPECT_EQ(md.ld_dest, (std::array<int, 4>{4, 5, -1, -1}));
  EXPECT_EQ(md.num_stores, 0);
  EXPECT_EQ(md.num_loads(), 2);
  EXPECT_EQ(md.branch.successor, 2);
  EXPECT_FALSE(md.branch.conditional);
  EXPECT_TRUE(meta_for(p, 2).branch.exit);
}

TEST(GenMetadata, BarrierAndParameterLoadFlags) {
  Kernel k = parse_kernel(".kernel k .params 1 .regs 4\n  LD.PARAM r3, [0]\n  IADD r1, r3, 1\n  BAR\n  IADD r2, r1, 2\n  RET\n");
  Partition p = partition(k, {});
  ASSERT_EQ(p.pgraphs.size(), 3u);
  EXPECT_TRUE(meta_for(p, 0).parameter_load);
  EXPECT_FALSE(meta_for(p, 1).parameter_load);
  EXPECT_FALSE(meta_for(p, 1).barrier);
  EXPECT_TRUE(meta_for(p, 2).barrier);
  EXPECT_EQ(meta_for(p, 0).branch.successor, 1);
}

TEST(GenMetadata, ConditionalAndBackwardBranches) {
  Kernel k = parse_kernel(fixtures::kLoop);
  Partition p = partition(k, {});
  bool saw_backward = false;
  for (const auto& pg : p.pgraphs) {
    PGraphMetadata md = meta_for(p, pg.id);
    EXPECT_EQ(md.in_regs.count(), pg.in_regs.count());
    EXPECT_EQ(md.lat, place_and_route(pg, {}).lat);
    if (pg.branch.kind == BranchInfo::Kind::Conditional) {
      EXPECT_TRUE(md.branch.conditional);
      EXPECT_EQ(md.branch.successor, pg.branch.target);
      EXPECT_EQ(md.branch.reconverge, pg.branch.reconverge);
      saw_backward |= md.branch.backward;
    }
    EXPECT_EQ(decode_metadata(encode_metadata(md)), md);
  }
  EXPECT_TRUE(saw_backward);
}

TEST(GenMetadata, LatencyOverflowRejected) {
  PGraph pg;
  Mapping m;
  m.lat = 300;
  EXPECT_THROW(gen_metadata(pg, m, 0, 0, 1), EncodeError);
}

TEST(GenMetadata, DumpIsOneLineJson) {
  PGraphMetadata md;
  md.in_regs.set(3);
  md.in_regs.set(32);
  md.ld_dest[0] = 4;
  std::string s = dump_metadata(md, 5);
  EXPECT_EQ(s.find('\n'), std::string::npos);
  EXPECT_NE(s.find("\"id\":5"), std::string::npos);
  EXPECT_NE(s.find("\"in_regs\":[\"r3\",\"p0\"]"), std::string::npos);
  EXPECT_NE(s.find("\"ld_dest\":[4,null,null,null]"), std::string::npos);
}
