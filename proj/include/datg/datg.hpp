// Copyright 2026 The datg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "datg/backends.hpp"
#include "datg/baselines.hpp"
#include "datg/control.hpp"
#include "datg/corpus.hpp"
#include "datg/embedding.hpp"
#include "datg/error.hpp"
#include "datg/eval.hpp"
#include "datg/graph.hpp"
#include "datg/http_backends.hpp"
#include "datg/io.hpp"
#include "datg/lexicon.hpp"
#include "datg/ngram.hpp"
#include "datg/parallel.hpp"
#include "datg/pipeline.hpp"
#include "datg/sampling.hpp"
#include "datg/task.hpp"
#include "datg/text.hpp"
