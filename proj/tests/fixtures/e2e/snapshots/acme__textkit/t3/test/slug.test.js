const test = require('node:test');
const assert = require('node:assert');
const { slugify } = require('../src/slug');

test('slugify lowercases words', () => {
  assert.strictEqual(slugify('Hello World'), 'hello-world');
});

test('slugify strips trailing dashes', () => {
  assert.strictEqual(slugify('Hello, World!'), 'hello-world');
});

test('slugify keeps empty input empty', () => {
  assert.strictEqual(slugify(''), '');
});
