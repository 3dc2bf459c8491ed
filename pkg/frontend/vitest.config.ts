import { defineConfig } from 'vitest/config';

export default defineConfig({
  test: {
    environment: 'node',
    include: ['tests/**/*.test.ts'],
    // The end-to-end session test renders stimuli server-side for every
    // trial, which dominates its runtime.
    testTimeout: 900_000,
    hookTimeout: 120_000,
  },
});
