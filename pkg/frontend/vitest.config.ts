import { defineConfig } from "vitest/config";

export default defineConfig({
  resolve: {
    // Sources import with explicit .js extensions (native-ESM browser build);
    // strip them so vite resolves back to the .ts files under test.
    alias: [{ find: /^(\.{1,2}\/.*)\.js$/, replacement: "$1" }],
  },
  test: {
    include: ["tests/**/*.test.ts"],
    testTimeout: 60_000,
    hookTimeout: 60_000,
  },
});
