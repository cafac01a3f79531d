#pragma once

#include <stdexcept>
#include <string>

namespace vip {

struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

#define VIP_DEFINE_ERROR(Name)                                      \
  struct Name : Error {                                             \
    explicit Name(const std::string& msg) : Error(#Name ": " + msg) {} \
  }

VIP_DEFINE_ERROR(DimensionMismatch);
VIP_DEFINE_ERROR(DegenerateNorm);
VIP_DEFINE_ERROR(NonFiniteGradient);
VIP_DEFINE_ERROR(NonFiniteLoss);
VIP_DEFINE_ERROR(NonFinite);
VIP_DEFINE_ERROR(WrongDomain);
VIP_DEFINE_ERROR(EmptyPositives);
VIP_DEFINE_ERROR(InsufficientClassData);
VIP_DEFINE_ERROR(RobotDataLeak);
VIP_DEFINE_ERROR(NotNormalized);
VIP_DEFINE_ERROR(EmptyDataset);
VIP_DEFINE_ERROR(KTooLarge);
VIP_DEFINE_ERROR(DegenerateMean);
VIP_DEFINE_ERROR(CorruptFile);
VIP_DEFINE_ERROR(VersionMismatch);
VIP_DEFINE_ERROR(EmptyBatch);
VIP_DEFINE_ERROR(MissingEmbedding);
VIP_DEFINE_ERROR(FingerprintMismatch);
VIP_DEFINE_ERROR(IoError);

#undef VIP_DEFINE_ERROR

}  // namespace vip
