/** Campaign configuration schema, mirroring the server's config contract. */

import { z } from "zod";

export const costModelSchema = z.union([
  z.object({
    mode: z.literal("discrete"),
    levels: z.array(z.number()).nonempty(),
    ratios: z.array(z.number().positive()).nonempty(),
  }),
  z.object({
    mode: z.literal("continuous"),
    c0: z.number().positive(),
    exponent: z.number(),
  }),
]);

const common = {
  iterations: z.number().int().min(1),
  init_n: z.number().int().min(2),
  init_method: z.enum(["lhs", "sobol", "uniform"]),
  acquisition: z.enum(["EI", "PI", "LCB", "EHVI", "qEHVI"]).nullable(),
  q: z.number().int().min(1),
  beta: z.number().min(0),
  mc_samples: z.number().int().min(1),
  seed: z.number().int(),
  budget: z.number().positive().nullable(),
  imputation: z.enum(["drop_rows", "mean", "median", "constant"]),
  imputation_constant: z.number().optional(),
  fidelity: costModelSchema.nullable(),
  ref_point: z.array(z.number()).nullable().optional(),
};

export const benchmarkConfigSchema = z
  .object({
    mode: z.literal("benchmark"),
    benchmark: z.string().min(1),
    ...common,
  })
  .strict();

export const datasetConfigSchema = z
  .object({
    mode: z.literal("dataset"),
    table_id: z.string().min(1),
    x_columns: z.array(z.string().min(1)).nonempty(),
    y_columns: z.array(z.string().min(1)).nonempty(),
    directions: z.array(z.enum(["maximize", "minimize"])),
    bounds: z.array(z.tuple([z.number(), z.number()])).nonempty(),
    ...common,
  })
  .strict()
  .refine((c) => c.bounds.length === c.x_columns.length, {
    message: "bounds must align with x_columns",
  })
  .refine(
    (c) => c.directions.length === 0 || c.directions.length === c.y_columns.length,
    { message: "directions must align with y_columns" },
  )
  .refine((c) => c.bounds.every(([lo, hi]) => hi > lo), {
    message: "each bound must satisfy hi > lo",
  });

export const campaignConfigSchema = z.union([
  benchmarkConfigSchema,
  datasetConfigSchema,
]);

export type CampaignConfig = z.infer<typeof campaignConfigSchema>;
export type CostModel = z.infer<typeof costModelSchema>;

export const configDefaults = {
  iterations: 10,
  init_n: 5,
  init_method: "lhs" as const,
  acquisition: null,
  q: 1,
  beta: 1.0,
  mc_samples: 512,
  seed: 0,
  budget: null,
  imputation: "drop_rows" as const,
  fidelity: null,
};
