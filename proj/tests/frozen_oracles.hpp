#pragma once

// Reference values produced by tests/oracles/compute_oracles.py (numpy and
// mpmath, independent of the library). Regenerate with that script.
namespace frozen {

inline constexpr double kAteTau = 1.2650000000000001;
inline constexpr double kAteAipwVariance = 2.386753354978355;
inline constexpr double kAteIfFirstPoint = 0.24928571428571433;
inline constexpr double kAteIpwNuisanceGrad[3] = {-1.0857142857142856, -2.1363636363636362,
                                                  -1.8095238095238095};

inline constexpr double kGaussianKernelHalfOffset = 0.4839414490382867;  // b = 0.5, |u| = 0.5
inline constexpr double kGaussianPhi0 = 0.3989422804014327;
inline constexpr double kGaussianSquareIntegral = 0.28209479177387814;
inline constexpr double kNwTargetVariance = 2.1213203435596424;

inline constexpr double kNormalGridDensityAtZero = 0.39877611755431003;

inline constexpr double kSchurExample = 1.0;
inline constexpr double kProjectionCoefficient = 1.5;

inline constexpr double kIvEww[2][2] = {{1.0, 0.5}, {0.5, 1.3}};
inline constexpr double kIvBoundUnconditional = 0.5225668207962101;
inline constexpr double kIvBoundGls = 0.40492091388400686;
inline constexpr double kIvBoundHomoskedastic = 0.312195121951219;

inline constexpr double kTiltedMeanBound = 1.29;
inline constexpr double kTiltedMeanCramerRao = 1.2006699751861043;

inline constexpr double kAvgDensity = 0.38;
inline constexpr double kAvgDensityIfFirst = 0.24;

}  // namespace frozen
