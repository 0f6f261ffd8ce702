#pragma once

#include "oodknn/bench.hpp"
#include "oodknn/detectors.hpp"
#include "oodknn/embedding_store.hpp"
#include "oodknn/error.hpp"
#include "oodknn/knn.hpp"
#include "oodknn/manifest.hpp"
#include "oodknn/metrics.hpp"
#include "oodknn/parallel.hpp"
#include "oodknn/report.hpp"
#include "oodknn/synthetic.hpp"
